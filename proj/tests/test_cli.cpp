#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "micl/text.hpp"

namespace fs = std::filesystem;

namespace {

const std::string cli = MICL_CLI_PATH;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("micl_cli_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& rel = "") const { return (path / rel).string(); }
};

int run(const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return micl::fnv1a64(bytes);
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    return j;
}

std::size_t line_count(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("synth writes 60/20/20 splits and is hash-deterministic") {
    TempDir dir;
    CHECK(run("synth --out " + dir.str("a") + " --size 50 --seed 7") == 0);
    CHECK(line_count(dir.str("a/train.jsonl")) == 30);
    CHECK(line_count(dir.str("a/val.jsonl")) == 10);
    CHECK(line_count(dir.str("a/test.jsonl")) == 10);

    CHECK(run("synth --out " + dir.str("b") + " --size 50 --seed 7") == 0);
    for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl"})
        CHECK(file_hash(dir.str("a/") + f) == file_hash(dir.str("b/") + f));

    auto man = read_json(dir.str("a/manifest.json"));
    CHECK(man.at("command") == "synth");
    CHECK(man.at("seed") == 7);
    CHECK(man.at("artifacts").size() == 3);
}

TEST_CASE("synth rejects a degenerate size") {
    TempDir dir;
    CHECK(run("synth --out " + dir.str("x") + " --size 1") == 1);
}

TEST_CASE("augment emits the expected strategy mix and honors the skip flags") {
    TempDir dir;
    REQUIRE(run("synth --out " + dir.str("d") + " --size 20 --seed 3") == 0);
    const std::string train = dir.str("d/train.jsonl");  // 12 originals

    CHECK(run("augment --dataset " + train + " --out " + dir.str("full") + " --seed 3") == 0);
    auto sum = read_json(dir.str("full/augment_summary.json"));
    CHECK(sum.at("originals") == 12);
    CHECK(sum.at("total") == 36);
    const auto& counts = sum.at("strategy_counts");
    CHECK(counts.at("flip").get<int>() + counts.at("paraphrase").get<int>() == 12);
    CHECK(counts.at("crop").get<int>() + counts.at("swap").get<int>() +
              counts.at("style").get<int>() + counts.at("regen").get<int>() ==
          12);

    CHECK(run("augment --dataset " + train + " --out " + dir.str("t") +
              " --seed 3 --no-image-aug") == 0);
    auto tsum = read_json(dir.str("t/augment_summary.json"));
    CHECK(tsum.at("total") == 24);
    CHECK(tsum.at("strategy_counts").at("crop") == 0);
    CHECK(tsum.at("strategy_counts").at("swap") == 0);

    CHECK(run("augment --dataset " + train + " --out " + dir.str("n") +
              " --seed 3 --no-image-aug --no-text-aug") == 0);
    CHECK(read_json(dir.str("n/augment_summary.json")).at("total") == 12);
}

TEST_CASE("augment with a missing input fails with the validation exit code") {
    TempDir dir;
    CHECK(run("augment --dataset " + dir.str("nope.jsonl") + " --out " + dir.str("o")) == 1);
}

TEST_CASE("train then eval round trip") {
    TempDir dir;
    REQUIRE(run("synth --out " + dir.str("d") + " --size 40 --seed 7") == 0);
    const std::string common = " --dataset " + dir.str("d/train.jsonl") + " --val " +
                               dir.str("d/val.jsonl") + " --dim 8 --epochs 2 --batch 8 --seed 7";

    CHECK(run("train --out " + dir.str("r1") + common) == 0);
    CHECK(line_count(dir.str("r1/training_log.jsonl")) == 2);
    auto man = read_json(dir.str("r1/manifest.json"));
    CHECK(man.at("config").at("tau") == 0.07);
    CHECK(man.at("config").at("lambda") == 1.0);
    CHECK(man.at("config").at("edge_threshold") == 0.6);

    // identical flags reproduce identical artifacts
    CHECK(run("train --out " + dir.str("r2") + common) == 0);
    CHECK(file_hash(dir.str("r1/checkpoint.json")) == file_hash(dir.str("r2/checkpoint.json")));
    CHECK(file_hash(dir.str("r1/training_log.jsonl")) ==
          file_hash(dir.str("r2/training_log.jsonl")));

    CHECK(run("eval --checkpoint " + dir.str("r1/checkpoint.json") + " --dataset " +
              dir.str("d/test.jsonl") + " --out " + dir.str("e") + " --credibility") == 0);
    auto metrics = read_json(dir.str("e/metrics.json"));
    CHECK(metrics.at("samples") == 8);
    CHECK(metrics.at("tp").get<int>() + metrics.at("fp").get<int>() +
              metrics.at("tn").get<int>() + metrics.at("fn").get<int>() ==
          8);
    auto cred = read_json(dir.str("e/credibility.json"));
    CHECK(cred.contains("full"));
    CHECK(cred.at("full").at("c_w").get<double>() >= 0.0);
    CHECK(cred.at("full").at("c_w").get<double>() < 1.0);
}

TEST_CASE("train with lambda 0 records it and logs zero contrastive loss") {
    TempDir dir;
    REQUIRE(run("synth --out " + dir.str("d") + " --size 20 --seed 5") == 0);
    CHECK(run("train --out " + dir.str("r") + " --dataset " + dir.str("d/train.jsonl") +
              " --val " + dir.str("d/val.jsonl") +
              " --dim 8 --epochs 1 --batch 6 --lambda 0") == 0);
    CHECK(read_json(dir.str("r/manifest.json")).at("config").at("lambda") == 0.0);
    std::ifstream log(dir.str("r/training_log.jsonl"));
    nlohmann::json row;
    log >> row;
    CHECK(row.at("l_cl") == 0.0);
    CHECK(row.at("l_total") == row.at("l_ce"));
}

TEST_CASE("flags beat the config file, which beats defaults") {
    TempDir dir;
    REQUIRE(run("synth --out " + dir.str("d") + " --size 20 --seed 5") == 0);
    {
        std::ofstream cfg(dir.str("cfg.json"));
        cfg << R"({"dim": 12, "tau": 0.5, "epochs": 1, "batch": 6})";
    }
    CHECK(run("train --out " + dir.str("r") + " --dataset " + dir.str("d/train.jsonl") +
              " --val " + dir.str("d/val.jsonl") + " --config " + dir.str("cfg.json") +
              " --tau 0.25") == 0);
    auto cj = read_json(dir.str("r/manifest.json")).at("config");
    CHECK(cj.at("d") == 12);       // from file
    CHECK(cj.at("tau") == 0.25);   // flag wins
    CHECK(cj.at("lambda") == 1.0); // default
}

TEST_CASE("train flag validation") {
    TempDir dir;
    REQUIRE(run("synth --out " + dir.str("d") + " --size 20 --seed 5") == 0);
    const std::string common = " --dataset " + dir.str("d/train.jsonl") + " --val " +
                               dir.str("d/val.jsonl") + " --out " + dir.str("r");
    CHECK(run("train" + common + " --epochs 0") != 0);
    CHECK(run("train" + common + " --lambda -1") != 0);
    CHECK(run("train" + common + " --edge-threshold 1.5") == 1);
}

TEST_CASE("eval rejects a checkpoint/dataset dimension mismatch") {
    TempDir dir;
    REQUIRE(run("synth --out " + dir.str("d") + " --size 20 --seed 5") == 0);
    REQUIRE(run("synth --out " + dir.str("w") + " --size 20 --seed 5 --patch-dim 4") == 0);
    REQUIRE(run("train --out " + dir.str("r") + " --dataset " + dir.str("d/train.jsonl") +
                " --val " + dir.str("d/val.jsonl") + " --dim 8 --epochs 1 --batch 6") == 0);
    CHECK(run("eval --checkpoint " + dir.str("r/checkpoint.json") + " --dataset " +
              dir.str("w/test.jsonl") + " --out " + dir.str("e")) == 1);
    CHECK(run("eval --checkpoint " + dir.str("d/train.jsonl") + " --dataset " +
              dir.str("d/test.jsonl") + " --out " + dir.str("e2")) == 1);
}

TEST_CASE("gradcheck passes at the default small config and validates eps") {
    TempDir dir;
    CHECK(run("gradcheck --out " + dir.str("g") + " --seed 7") == 0);
    auto rep = read_json(dir.str("g/gradcheck.json"));
    CHECK(rep.at("pass") == true);
    for (const auto& row : rep.at("groups"))
        CHECK(row.at("max_rel_error").get<double>() < 1e-4);
    CHECK(run("gradcheck --out " + dir.str("g2") + " --eps 0") == 1);
    CHECK(run("gradcheck --out " + dir.str("g3") + " --eps 0.5") == 1);
}
