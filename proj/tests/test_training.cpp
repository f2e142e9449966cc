#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "micl/data.hpp"
#include "micl/metrics.hpp"
#include "micl/model.hpp"
#include "micl/train.hpp"

using namespace micl;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.d = 8;
    c.encoder_depth = 1;
    c.gat_depth = 1;
    c.vocab_size = 64;
    c.patch_dim = 4;
    c.max_len = 24;
    return c;
}

SynthConfig small_synth(std::size_t size) {
    SynthConfig s;
    s.size = size;
    s.vocab_size = 64;
    s.n_patches = 4;
    s.patch_dim = 4;
    return s;
}

Dataset take(const Dataset& ds, std::size_t from, std::size_t count) {
    Dataset out;
    out.split = ds.split;
    for (std::size_t i = from; i < from + count && i < ds.samples.size(); ++i)
        out.samples.push_back(ds.samples[i]);
    return out;
}

}  // namespace

TEST_CASE("metrics") {
    SUBCASE("perfect predictions") {
        auto m = compute_metrics({1, 0, 1, 0}, {1, 0, 1, 0});
        CHECK(m.accuracy == 1.0);
        CHECK(m.f1 == 1.0);
        CHECK(m.macro_f1 == 1.0);
        CHECK_FALSE(m.degenerate);
    }
    SUBCASE("balanced confusion") {
        auto m = compute_metrics({1, 1, 0, 0}, {1, 0, 1, 0});
        CHECK(m.tp == 1);
        CHECK(m.fp == 1);
        CHECK(m.tn == 1);
        CHECK(m.fn == 1);
        CHECK(m.accuracy == doctest::Approx(0.5));
        CHECK(m.precision == doctest::Approx(0.5));
        CHECK(m.recall == doctest::Approx(0.5));
        CHECK(m.f1 == doctest::Approx(0.5));
    }
    SUBCASE("all-positive predictions on an all-negative set") {
        auto m = compute_metrics({0, 0, 0}, {1, 1, 1});
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);  // 0/0 convention
        CHECK(m.degenerate);
    }
    SUBCASE("macro f1 is the unweighted mean of per-class f1") {
        auto m = compute_metrics({1, 1, 1, 0, 0, 1, 0, 1}, {1, 0, 1, 0, 1, 1, 0, 0});
        // class 1: tp=3 fp=1 fn=2 -> p=.75 r=.6 f1=2*.45/1.35
        // class 0: tn=2 fn=2 fp=1 -> p0=.5 r0=2/3 f0=2*(1/3)/(7/6)
        const double f1 = 2.0 * 0.75 * 0.6 / 1.35;
        const double f0 = 2.0 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0);
        CHECK(m.macro_f1 == doctest::Approx(0.5 * (f1 + f0)).epsilon(1e-12));
    }
}

TEST_CASE("full-model gradient check at d=8, B=4") {
    Model model(small_config());
    model.init(123);
    auto ds = generate_synthetic(small_synth(16), 77);
    std::vector<const Sample*> batch;
    for (std::size_t i = 0; i < 4; ++i) batch.push_back(&ds.samples[i]);
    auto reports = grad_check(model, batch, 1e-4);
    CHECK(reports.size() == model.params().items().size());
    for (const auto& r : reports) {
        INFO(r.group);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("grad_check rejects bad eps") {
    Model model(small_config());
    model.init(1);
    auto ds = generate_synthetic(small_synth(4), 1);
    std::vector<const Sample*> batch{&ds.samples[0], &ds.samples[1]};
    CHECK_THROWS(grad_check(model, batch, 0.0));
    CHECK_THROWS(grad_check(model, batch, 1e-2));
}

TEST_CASE("checkpoint save/load reproduces evaluation exactly") {
    Model model(small_config());
    model.init(55);
    auto ds = generate_synthetic(small_synth(12), 9);
    auto m1 = evaluate(model, ds);
    auto path = (std::filesystem::temp_directory_path() / "micl_ckpt_test.json").string();
    model.save(path);
    Model loaded = Model::load(path);
    auto m2 = evaluate(loaded, ds);
    CHECK(m1.accuracy == m2.accuracy);
    CHECK(m1.tp == m2.tp);
    CHECK(m1.fp == m2.fp);
    CHECK(m1.macro_f1 == m2.macro_f1);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint/dataset dimension mismatch is detected") {
    Model model(small_config());
    model.init(2);
    SynthConfig wrong = small_synth(4);
    wrong.patch_dim = 7;
    auto ds = generate_synthetic(wrong, 3);
    CHECK_THROWS(evaluate(model, ds));
}

TEST_CASE("training is deterministic and its loss trends down") {
    auto ds = generate_synthetic(small_synth(60), 7);
    auto train_ds = take(ds, 0, 40);
    auto val_ds = take(ds, 40, 20);
    auto aug = plan_augmentation(train_ds, AugmentationPlan{}, 7);

    TrainConfig cfg;
    cfg.model = small_config();
    cfg.batch_size = 12;
    cfg.epochs = 5;
    cfg.learning_rate = 1e-3;
    cfg.seed = 7;

    auto r1 = train(cfg, aug, val_ds);
    auto r2 = train(cfg, aug, val_ds);
    REQUIRE(r1.logs.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(r1.logs[i].l_total == r2.logs[i].l_total);
        CHECK(r1.logs[i].val_accuracy == r2.logs[i].val_accuracy);
    }
    // monotone decrease over the first 5 epochs, tolerating one
    // non-improving epoch
    std::size_t non_improving = 0;
    for (std::size_t i = 1; i < 5; ++i)
        if (r1.logs[i].l_total >= r1.logs[i - 1].l_total) ++non_improving;
    CHECK(non_improving <= 1);
}

TEST_CASE("lambda = 0 reduces training to plain classification") {
    auto ds = generate_synthetic(small_synth(20), 3);
    TrainConfig cfg;
    cfg.model = small_config();
    cfg.model.lambda = 0.0;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.learning_rate = 1e-3;
    auto r = train(cfg, ds, ds);
    for (const auto& log : r.logs) {
        CHECK(log.l_cl == 0.0);
        CHECK(log.l_total == log.l_ce);
    }
}

TEST_CASE("training rejects a single-label set") {
    auto ds = generate_synthetic(small_synth(20), 3);
    Dataset single;
    single.split = Split::train;
    for (const auto& s : ds.samples)
        if (s.label == 1) single.samples.push_back(s);
    TrainConfig cfg;
    cfg.model = small_config();
    CHECK_THROWS(train(cfg, single, ds));
}

TEST_CASE("credibility report") {
    SUBCASE("zeroed heads give the closed-form mean credibility") {
        Model model(small_config());
        model.init(8);
        for (const char* head : {"head_w", "head_e", "head_s"}) {
            for (auto& v : model.params().get(std::string(head) + ".W").data()) v = 0.0;
            for (auto& v : model.params().get(std::string(head) + ".b").data()) v = 0.0;
        }
        auto ds = generate_synthetic(small_synth(6), 5);
        auto rep = credibility_report(model, ds);
        const double expected = 2.0 * std::log(2.0) / (2.0 * std::log(2.0) + 2.0);
        REQUIRE(rep.full.has_value());
        CHECK(rep.full->c_w == doctest::Approx(expected).epsilon(1e-12));
        CHECK(rep.full->c_e == doctest::Approx(expected).epsilon(1e-12));
        CHECK(rep.full->c_s == doctest::Approx(expected).epsilon(1e-12));
        CHECK(expected == doctest::Approx(0.4094).epsilon(1e-4));
    }
    SUBCASE("singleton dataset: group mean equals the sample") {
        Model model(small_config());
        model.init(9);
        auto ds = generate_synthetic(small_synth(4), 6);
        Dataset one;
        one.samples.push_back(ds.samples[0]);
        auto rep = credibility_report(model, one);
        REQUIRE(rep.full.has_value());
        if (ds.samples[0].label == 1) {
            REQUIRE(rep.sarcastic.has_value());
            CHECK_FALSE(rep.non_sarcastic.has_value());
            CHECK(rep.sarcastic->c_w == rep.full->c_w);
        } else {
            REQUIRE(rep.non_sarcastic.has_value());
            CHECK_FALSE(rep.sarcastic.has_value());
            CHECK(rep.non_sarcastic->c_w == rep.full->c_w);
        }
        CHECK(rep.full->c_w >= 0.0);
        CHECK(rep.full->c_w < 1.0);
    }
}

TEST_CASE("best-validation checkpoint is retained") {
    auto ds = generate_synthetic(small_synth(30), 11);
    auto train_ds = take(ds, 0, 20);
    auto val_ds = take(ds, 20, 10);
    TrainConfig cfg;
    cfg.model = small_config();
    cfg.batch_size = 8;
    cfg.epochs = 3;
    cfg.learning_rate = 2e-3;
    auto r = train(cfg, train_ds, val_ds);
    const double best = r.logs[r.best_epoch].val_accuracy;
    for (const auto& log : r.logs) CHECK(log.val_accuracy <= best);
    CHECK(evaluate(r.model, val_ds).accuracy == doctest::Approx(best));
}
