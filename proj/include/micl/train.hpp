#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "micl/data.hpp"
#include "micl/metrics.hpp"
#include "micl/model.hpp"

namespace micl {

struct TrainConfig {
    ModelConfig model;
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    double learning_rate = 1e-5;  // suits fine-tuning pretrained weights; override for scratch runs
    std::uint64_t seed = 7;
};

struct EpochLog {
    std::size_t epoch = 0;
    double l_ce = 0.0;
    double l_cl = 0.0;
    double l_total = 0.0;
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
};

// ---------------------------------------------------------------------------

inline Metrics evaluate(const Model& model, const Dataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    std::vector<int> labels, preds;
    for (const auto& s : ds.samples) {
        Tape t;
        TapeParams tp(t, model.params());
        auto out = model.forward_sample(t, tp, s);
        labels.push_back(s.label);
        preds.push_back(t.value(out.prob)(0, 0) >= 0.5 ? 1 : 0);
    }
    return compute_metrics(labels, preds);
}

// ---------------------------------------------------------------------------
// Adam with a linear learning-rate decay to zero over the epoch count.

class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& store, const Tape& tape, const TapeParams& tp, double lr) {
        ++t_;
        for (auto& it : store.items()) {
            const Matrix& g = tape.grad(tp(it.name));
            auto& m = m_[it.name];
            auto& v = v_[it.name];
            if (m.size() == 0) {
                m = Matrix(it.value.rows(), it.value.cols());
                v = Matrix(it.value.rows(), it.value.cols());
            }
            const double bc1 = 1.0 - std::pow(beta1_, t_);
            const double bc2 = 1.0 - std::pow(beta2_, t_);
            for (std::size_t k = 0; k < it.value.size(); ++k) {
                const double gk = g.size() ? g[k] : 0.0;
                m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
                v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
                it.value[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
            }
        }
    }

private:
    double beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, Matrix> m_, v_;
};

struct TrainResult {
    Model model;  // best-validation checkpoint
    std::vector<EpochLog> logs;
    std::size_t best_epoch = 0;
};

// Reference-mode (single-threaded, deterministic) training loop.
inline TrainResult train(const TrainConfig& cfg, const Dataset& train_ds, const Dataset& val_ds,
                         const Lexicon& lexicon = Lexicon::builtin()) {
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.model.tau <= 0.0) throw std::invalid_argument("train: tau must be positive");
    if (cfg.model.lambda < 0.0) throw std::invalid_argument("train: lambda must be >= 0");
    auto counts = train_ds.label_counts();
    if (counts[0] == 0 || counts[1] == 0)
        throw std::invalid_argument("train: training set must contain both labels");

    Model model(cfg.model, lexicon);
    model.init(cfg.seed);
    Adam opt;

    TrainResult result{model, {}, 0};
    double best_acc = -1.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate *
                          (1.0 - static_cast<double>(epoch) / static_cast<double>(cfg.epochs));
        auto batches = build_batches(train_ds, cfg.batch_size, cfg.seed ^ (epoch + 1));
        double sum_ce = 0.0, sum_cl = 0.0, sum_total = 0.0;
        std::size_t n_samples = 0;
        for (const auto& batch : batches) {
            std::vector<const Sample*> samples;
            for (auto i : batch.indices) samples.push_back(&train_ds.samples[i]);
            Tape t;
            TapeParams tp(t, model.params());
            auto out = model.forward_batch(t, tp, samples);
            const double lv = t.value(out.loss)(0, 0);
            if (!std::isfinite(lv))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch));
            t.backward(out.loss);
            opt.step(model.params(), t, tp, lr);
            const double w = static_cast<double>(samples.size());
            sum_ce += t.value(out.l_ce)(0, 0) * w;
            sum_cl += t.value(out.l_cl)(0, 0) * w;
            sum_total += lv * w;
            n_samples += samples.size();
        }
        Metrics vm = evaluate(model, val_ds);
        EpochLog log;
        log.epoch = epoch;
        log.l_ce = sum_ce / n_samples;
        log.l_cl = sum_cl / n_samples;
        log.l_total = sum_total / n_samples;
        log.val_accuracy = vm.accuracy;
        log.val_macro_f1 = vm.macro_f1;
        result.logs.push_back(log);
        if (vm.accuracy > best_acc) {  // ties keep the earlier epoch
            best_acc = vm.accuracy;
            result.model = model;
            result.best_epoch = epoch;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Gradient checking: analytic tape gradients of the total loss against
// central finite differences, per parameter group.

struct GradCheckReport {
    std::string group;
    double max_rel_error = 0.0;
};

inline std::vector<GradCheckReport> grad_check(Model& model,
                                               const std::vector<const Sample*>& batch,
                                               double eps) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
    if (eps < 1e-5 || eps > 1e-3)
        throw std::invalid_argument("grad_check: eps must lie in [1e-5, 1e-3]");

    // analytic gradients
    std::map<std::string, Matrix> analytic;
    {
        Tape t;
        TapeParams tp(t, model.params());
        auto out = model.forward_batch(t, tp, batch);
        t.backward(out.loss);
        for (const auto& it : model.params().items()) {
            const Matrix& g = t.grad(tp(it.name));
            analytic[it.name] = g.size() ? g : Matrix(it.value.rows(), it.value.cols());
        }
    }

    auto loss_at = [&]() {
        Tape t;
        TapeParams tp(t, model.params());
        auto out = model.forward_batch(t, tp, batch);
        const double v = t.value(out.loss)(0, 0);
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss");
        return v;
    };

    std::vector<GradCheckReport> reports;
    for (auto& it : model.params().items()) {
        GradCheckReport rep{it.name, 0.0};
        const Matrix& ga = analytic[it.name];
        for (std::size_t k = 0; k < it.value.size(); ++k) {
            const double saved = it.value[k];
            it.value[k] = saved + eps;
            const double lp = loss_at();
            it.value[k] = saved - eps;
            const double lm = loss_at();
            it.value[k] = saved;
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = ga[k];
            const double denom = std::max(std::abs(an), std::abs(fd));
            if (denom < 1e-7) continue;  // both effectively zero
            rep.max_rel_error = std::max(rep.max_rel_error, std::abs(an - fd) / denom);
        }
        reports.push_back(rep);
    }
    return reports;
}

// ---------------------------------------------------------------------------
// Credibility study: mean per-view credibilities for the sarcastic,
// non-sarcastic, and full-set groups. Empty groups are reported as absent.

struct CredibilityTriple {
    double c_w = 0.0, c_e = 0.0, c_s = 0.0;
};

struct CredibilityReport {
    std::optional<CredibilityTriple> sarcastic;
    std::optional<CredibilityTriple> non_sarcastic;
    std::optional<CredibilityTriple> full;
};

inline CredibilityReport credibility_report(const Model& model, const Dataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("credibility_report: empty dataset");
    CredibilityTriple sums[3];  // 0 = non-sarcastic, 1 = sarcastic, 2 = full
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& s : ds.samples) {
        Tape t;
        TapeParams tp(t, model.params());
        auto out = model.forward_sample(t, tp, s);
        for (int g : {s.label, 2}) {
            sums[g].c_w += out.c_w;
            sums[g].c_e += out.c_e;
            sums[g].c_s += out.c_s;
            counts[g]++;
        }
    }
    auto mean_of = [&](int g) -> std::optional<CredibilityTriple> {
        if (counts[g] == 0) return std::nullopt;
        const double n = static_cast<double>(counts[g]);
        return CredibilityTriple{sums[g].c_w / n, sums[g].c_e / n, sums[g].c_s / n};
    };
    return CredibilityReport{mean_of(1), mean_of(0), mean_of(2)};
}

}  // namespace micl
