// Command-line front end: synthetic data generation, augmentation, training,
// evaluation, and gradient checking, each writing a run manifest.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "micl/data.hpp"
#include "micl/model.hpp"
#include "micl/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// exit code 2: a computation produced non-finite or out-of-tolerance numbers
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::uint64_t h = 14695981039346656037ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_json(const ordered_json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

// Manifest: everything needed to reproduce the run, plus output fingerprints.
struct Manifest {
    std::string command;
    std::uint64_t seed = 0;
    ordered_json config;
    std::vector<std::string> inputs;
    std::vector<std::string> artifacts;

    void write(const std::string& out_dir) const {
        ordered_json j;
        j["tool"] = "micl";
        j["version"] = kToolVersion;
        j["command"] = command;
        j["seed"] = seed;
        j["config"] = config;
        ordered_json ds = ordered_json::object();
        for (const auto& p : inputs) ds[p] = file_fingerprint(p);
        j["inputs"] = std::move(ds);
        ordered_json ar = ordered_json::object();
        for (const auto& p : artifacts) ar[p] = file_fingerprint(p);
        j["artifacts"] = std::move(ar);
        write_json(j, (fs::path(out_dir) / "manifest.json").string());
    }
};

// Flag > config-file > default resolution. CLI11 parses flags into the
// bound variables; values from --config only apply where no flag was seen.
class ConfigLayer {
public:
    explicit ConfigLayer(const std::string& path) {
        if (path.empty()) return;
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot open config file " + path);
        in >> j_;
    }
    template <typename T>
    void apply(const CLI::App& cmd, const std::string& flag, const std::string& key, T& value) const {
        if (cmd.count(flag) > 0) return;
        if (j_.contains(key)) value = j_.at(key).get<T>();
    }

private:
    nlohmann::json j_;
};

micl::Dataset load_or_throw(const std::string& path, micl::Split split) {
    auto rep = micl::load_dataset(path, split);
    for (const auto& issue : rep.issues)
        std::cerr << "warning: skipped record " << issue.record_id << ": " << issue.message << '\n';
    if (rep.dataset.samples.empty())
        throw std::invalid_argument("dataset " + path + " has no valid records");
    return rep.dataset;
}

// shared model/objective knobs, bound by train/eval/gradcheck
struct ModelFlags {
    micl::ModelConfig model;
    std::string config_path;

    void bind(CLI::App& cmd) {
        cmd.add_option("--config", config_path, "JSON config file (flags take precedence)");
        cmd.add_option("--dim", model.d, "model width d");
        cmd.add_option("--lambda", model.lambda, "contrastive loss weight")
            ->check(CLI::NonNegativeNumber);
        cmd.add_option("--tau", model.tau, "contrastive temperature")
            ->check(CLI::PositiveNumber);
        cmd.add_option("--edge-threshold", model.edge_threshold,
                       "cosine threshold for visual graph edges");
    }
    void resolve(const CLI::App& cmd) {
        ConfigLayer layer(config_path);
        layer.apply(cmd, "--dim", "dim", model.d);
        layer.apply(cmd, "--lambda", "lambda", model.lambda);
        layer.apply(cmd, "--tau", "tau", model.tau);
        layer.apply(cmd, "--edge-threshold", "edge_threshold", model.edge_threshold);
        if (model.edge_threshold <= -1.0 || model.edge_threshold >= 1.0)
            throw std::invalid_argument("--edge-threshold must lie in (-1, 1)");
    }
};

ordered_json model_json(const micl::ModelConfig& m) {
    ordered_json j;
    micl::to_json(j, m);
    return j;
}

// ---- synth ----------------------------------------------------------------

int cmd_synth(const std::string& out_dir, std::size_t size, std::uint64_t seed,
              std::size_t patch_dim, std::size_t n_patches) {
    micl::SynthConfig cfg;
    cfg.size = size;
    cfg.patch_dim = patch_dim;
    cfg.n_patches = n_patches;
    auto ds = micl::generate_synthetic(cfg, seed);

    // 60/20/20 split by position
    const std::size_t n = ds.samples.size();
    const std::size_t n_train = n * 3 / 5;
    const std::size_t n_val = n / 5;
    fs::create_directories(out_dir);

    Manifest man;
    man.command = "synth";
    man.seed = seed;
    man.config = {{"size", size}, {"patch_dim", patch_dim}, {"n_patches", n_patches}};
    const micl::Split splits[3] = {micl::Split::train, micl::Split::val, micl::Split::test};
    const std::size_t bounds[4] = {0, n_train, n_train + n_val, n};
    for (int i = 0; i < 3; ++i) {
        micl::Dataset part;
        part.split = splits[i];
        for (std::size_t k = bounds[i]; k < bounds[i + 1]; ++k)
            part.samples.push_back(ds.samples[k]);
        const auto path = (fs::path(out_dir) / (std::string(split_name(splits[i])) + ".jsonl")).string();
        micl::save_dataset(part, path);
        man.artifacts.push_back(path);
        std::cout << split_name(splits[i]) << ": " << part.samples.size() << " samples -> "
                  << path << '\n';
    }
    man.write(out_dir);
    return 0;
}

// ---- augment ---------------------------------------------------------------

int cmd_augment(const std::string& dataset_path, const std::string& out_dir, std::uint64_t seed,
                bool no_text, bool no_image) {
    auto ds = load_or_throw(dataset_path, micl::Split::train);
    micl::AugmentationPlan plan;
    plan.text_enabled = !no_text;
    plan.image_enabled = !no_image;
    micl::AugmentationSummary summary;
    auto aug = micl::plan_augmentation(ds, plan, seed, &summary);

    fs::create_directories(out_dir);
    const auto aug_path = (fs::path(out_dir) / "augmented.jsonl").string();
    micl::save_dataset(aug, aug_path);

    ordered_json sj;
    sj["originals"] = ds.samples.size();
    sj["total"] = aug.samples.size();
    ordered_json counts = ordered_json::object();
    for (const auto& [k, v] : summary.strategy_counts) counts[k] = v;
    sj["strategy_counts"] = std::move(counts);
    sj["fallbacks"] = summary.fallbacks;
    const auto sum_path = (fs::path(out_dir) / "augment_summary.json").string();
    write_json(sj, sum_path);

    Manifest man;
    man.command = "augment";
    man.seed = seed;
    man.config = {{"text_enabled", plan.text_enabled}, {"image_enabled", plan.image_enabled}};
    man.inputs = {dataset_path};
    man.artifacts = {aug_path, sum_path};
    man.write(out_dir);
    std::cout << ds.samples.size() << " originals -> " << aug.samples.size()
              << " samples (summary: " << sum_path << ")\n";
    return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const CLI::App& cmd, ModelFlags& mf, const std::string& train_path,
              const std::string& val_path, const std::string& out_dir, micl::TrainConfig& tcfg,
              bool no_credibility) {
    mf.resolve(cmd);
    ConfigLayer layer(mf.config_path);
    layer.apply(cmd, "--epochs", "epochs", tcfg.epochs);
    layer.apply(cmd, "--batch", "batch", tcfg.batch_size);
    layer.apply(cmd, "--lr", "learning_rate", tcfg.learning_rate);
    layer.apply(cmd, "--seed", "seed", tcfg.seed);
    tcfg.model = mf.model;
    tcfg.model.use_credibility = !no_credibility;

    auto train_ds = load_or_throw(train_path, micl::Split::train);
    auto val_ds = load_or_throw(val_path, micl::Split::val);

    auto result = [&] {
        try {
            return micl::train(tcfg, train_ds, val_ds);
        } catch (const std::runtime_error& e) {
            throw NumericalError(e.what());
        }
    }();

    fs::create_directories(out_dir);
    const auto ckpt_path = (fs::path(out_dir) / "checkpoint.json").string();
    result.model.save(ckpt_path);

    const auto log_path = (fs::path(out_dir) / "training_log.jsonl").string();
    {
        std::ofstream out(log_path);
        if (!out) throw std::invalid_argument("cannot open " + log_path + " for writing");
        for (const auto& l : result.logs) {
            ordered_json j;
            j["epoch"] = l.epoch;
            j["l_ce"] = l.l_ce;
            j["l_cl"] = l.l_cl;
            j["l_total"] = l.l_total;
            j["val_accuracy"] = l.val_accuracy;
            j["val_macro_f1"] = l.val_macro_f1;
            out << j.dump() << '\n';
        }
    }

    Manifest man;
    man.command = "train";
    man.seed = tcfg.seed;
    man.config = model_json(tcfg.model);
    man.config["epochs"] = tcfg.epochs;
    man.config["batch"] = tcfg.batch_size;
    man.config["learning_rate"] = tcfg.learning_rate;
    man.inputs = {train_path, val_path};
    man.artifacts = {ckpt_path, log_path};
    man.write(out_dir);

    const auto& best = result.logs[result.best_epoch];
    std::cout << "best epoch " << best.epoch << ": val accuracy " << best.val_accuracy
              << ", val macro-F1 " << best.val_macro_f1 << '\n'
              << "checkpoint: " << ckpt_path << '\n';
    return 0;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_path,
             const std::string& out_dir, bool with_credibility) {
    micl::Model model = [&] {
        try {
            return micl::Model::load(ckpt_path);
        } catch (const std::runtime_error& e) {
            throw std::invalid_argument(e.what());
        }
    }();
    auto ds = load_or_throw(dataset_path, micl::Split::test);

    micl::Metrics m = micl::evaluate(model, ds);
    fs::create_directories(out_dir);
    ordered_json mj;
    mj["samples"] = ds.samples.size();
    mj["tp"] = m.tp;
    mj["fp"] = m.fp;
    mj["tn"] = m.tn;
    mj["fn"] = m.fn;
    mj["accuracy"] = m.accuracy;
    mj["precision"] = m.precision;
    mj["recall"] = m.recall;
    mj["f1"] = m.f1;
    mj["macro_precision"] = m.macro_precision;
    mj["macro_recall"] = m.macro_recall;
    mj["macro_f1"] = m.macro_f1;
    mj["degenerate"] = m.degenerate;
    const auto metrics_path = (fs::path(out_dir) / "metrics.json").string();
    write_json(mj, metrics_path);

    Manifest man;
    man.command = "eval";
    man.config = model_json(model.config());
    man.inputs = {ckpt_path, dataset_path};
    man.artifacts = {metrics_path};

    if (with_credibility) {
        auto rep = micl::credibility_report(model, ds);
        ordered_json cj = ordered_json::object();
        auto put = [&](const char* name, const std::optional<micl::CredibilityTriple>& t) {
            if (!t) return;
            cj[name] = {{"c_w", t->c_w}, {"c_e", t->c_e}, {"c_s", t->c_s}};
        };
        put("sarcastic", rep.sarcastic);
        put("non_sarcastic", rep.non_sarcastic);
        put("full", rep.full);
        const auto cred_path = (fs::path(out_dir) / "credibility.json").string();
        write_json(cj, cred_path);
        man.artifacts.push_back(cred_path);
    }
    man.write(out_dir);
    std::cout << "accuracy " << m.accuracy << ", macro-F1 " << m.macro_f1 << " ("
              << metrics_path << ")\n";
    return 0;
}

// ---- gradcheck ---------------------------------------------------------------

int cmd_gradcheck(const CLI::App& cmd, ModelFlags& mf, const std::string& out_dir,
                  std::uint64_t seed, std::size_t batch, double eps) {
    mf.resolve(cmd);
    micl::ModelConfig mc = mf.model;
    mc.encoder_depth = 1;
    mc.gat_depth = 1;
    mc.vocab_size = 64;
    mc.patch_dim = 4;

    micl::Model model(mc);
    model.init(seed);
    micl::SynthConfig sc;
    sc.size = std::max<std::size_t>(batch, 2);
    sc.vocab_size = mc.vocab_size;
    sc.n_patches = 4;
    sc.patch_dim = mc.patch_dim;
    auto ds = micl::generate_synthetic(sc, seed);
    std::vector<const micl::Sample*> samples;
    for (std::size_t i = 0; i < std::max<std::size_t>(batch, 2); ++i)
        samples.push_back(&ds.samples[i]);

    std::vector<micl::GradCheckReport> reports;
    try {
        reports = micl::grad_check(model, samples, eps);
    } catch (const std::runtime_error& e) {
        throw NumericalError(e.what());
    }

    const double bound = 1e-4;
    fs::create_directories(out_dir);
    ordered_json rows = ordered_json::array();
    std::string failing;
    std::printf("%-28s %s\n", "group", "max_rel_error");
    for (const auto& r : reports) {
        std::printf("%-28s %.3e\n", r.group.c_str(), r.max_rel_error);
        rows.push_back({{"group", r.group}, {"max_rel_error", r.max_rel_error}});
        if (r.max_rel_error >= bound && failing.empty()) failing = r.group;
    }
    ordered_json j;
    j["eps"] = eps;
    j["bound"] = bound;
    j["groups"] = std::move(rows);
    j["pass"] = failing.empty();
    const auto report_path = (fs::path(out_dir) / "gradcheck.json").string();
    write_json(j, report_path);

    Manifest man;
    man.command = "gradcheck";
    man.seed = seed;
    man.config = model_json(mc);
    man.config["eps"] = eps;
    man.config["batch"] = batch;
    man.artifacts = {report_path};
    man.write(out_dir);

    if (!failing.empty())
        throw NumericalError("gradient check failed for group " + failing);
    std::cout << "all " << reports.size() << " groups below " << bound << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"micl: multi-view incongruity learning, reference implementation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with splits");
    std::string synth_out = "data";
    std::size_t synth_size = 1000, synth_patch_dim = 8, synth_n_patches = 16;
    std::uint64_t synth_seed = 7;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--size", synth_size, "total sample count");
    synth->add_option("--seed", synth_seed, "generation seed");
    synth->add_option("--patch-dim", synth_patch_dim, "patch feature width");
    synth->add_option("--n-patches", synth_n_patches, "patches per image");

    // augment
    auto* augment = app.add_subcommand("augment", "expand a training split with augmentations");
    std::string aug_dataset, aug_out = "aug";
    std::uint64_t aug_seed = 7;
    bool no_text = false, no_image = false;
    augment->add_option("--dataset", aug_dataset, "training split (jsonl)")->required();
    augment->add_option("--out", aug_out, "output directory");
    augment->add_option("--seed", aug_seed, "augmentation seed");
    augment->add_flag("--no-text-aug", no_text, "skip text augmentations");
    augment->add_flag("--no-image-aug", no_image, "skip image augmentations");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    ModelFlags train_mf;
    micl::TrainConfig tcfg;
    tcfg.learning_rate = 1e-2;  // from-scratch default; much smaller rates stall at this scale
    std::string train_dataset, train_val, train_out = "run";
    bool no_credibility = false;
    train_mf.bind(*train_cmd);
    train_cmd->add_option("--dataset", train_dataset, "training split (jsonl)")->required();
    train_cmd->add_option("--val", train_val, "validation split (jsonl)")->required();
    train_cmd->add_option("--out", train_out, "output directory");
    train_cmd->add_option("--seed", tcfg.seed, "training seed");
    train_cmd->add_option("--epochs", tcfg.epochs, "epoch count")->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", tcfg.batch_size, "batch size");
    train_cmd->add_option("--lr", tcfg.learning_rate, "initial learning rate")
        ->check(CLI::PositiveNumber);
    train_cmd->add_flag("--no-credibility", no_credibility,
                        "ablation: fuse views without credibility weighting");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string eval_ckpt, eval_dataset, eval_out = "eval";
    bool with_credibility = false;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "evaluation split (jsonl)")->required();
    eval_cmd->add_option("--out", eval_out, "output directory");
    eval_cmd->add_flag("--credibility", with_credibility, "also write per-group credibility means");

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "compare analytic gradients to finite differences");
    ModelFlags gc_mf;
    std::string gc_out = "gradcheck";
    std::uint64_t gc_seed = 7;
    std::size_t gc_batch = 4;
    double gc_eps = 1e-4;
    gc_mf.bind(*gc_cmd);
    gc_mf.model.d = 8;
    gc_cmd->add_option("--out", gc_out, "output directory");
    gc_cmd->add_option("--seed", gc_seed, "parameter and data seed");
    gc_cmd->add_option("--batch", gc_batch, "batch size");
    gc_cmd->add_option("--eps", gc_eps, "finite-difference step");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_out, synth_size, synth_seed, synth_patch_dim,
                                              synth_n_patches);
        if (augment->parsed()) return cmd_augment(aug_dataset, aug_out, aug_seed, no_text, no_image);
        if (train_cmd->parsed())
            return cmd_train(*train_cmd, train_mf, train_dataset, train_val, train_out, tcfg,
                             no_credibility);
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_dataset, eval_out, with_credibility);
        if (gc_cmd->parsed()) return cmd_gradcheck(*gc_cmd, gc_mf, gc_out, gc_seed, gc_batch, gc_eps);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
