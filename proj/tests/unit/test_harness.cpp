#include "doctest.h"
#include "support/tiny_task.hpp"

#include "selfaug/data/jsonl.hpp"
#include "selfaug/errors.hpp"
#include "selfaug/harness/commands.hpp"
#include "selfaug/harness/experiment.hpp"
#include "selfaug/harness/pca.hpp"

#include <sys/wait.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace selfaug;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("selfaug_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell);
    return out;
}

nlohmann::json tiny_json(double ambiguity = 0.0, std::size_t count = 150) {
    nlohmann::json j;
    j["seed"] = 21;
    j["data"]["synth"] = selfaug::testing::tiny_spec(ambiguity, count).to_json();
    j["data"]["split_ratios"] = {0.6, 0.2, 0.2};
    j["model"] = {{"d_model", 16}, {"n_heads", 2}, {"n_layers", 2}, {"d_ff", 32}, {"max_seq_len", 12},
                  {"dropout_rate", 0.1}};
    j["dual"] = {{"L_i", 1}, {"L_j", 1}, {"alpha", 0.2}, {"projection_dims", {16, 8}}};
    j["train"] = {{"learning_rate", 3e-3}, {"max_epochs", 3}, {"patience", 2}, {"batch_size", 16}};
    j["kfold_k"] = 2;
    return j;
}

ExperimentConfig tiny_config(double ambiguity = 0.0, std::size_t count = 150) {
    return ExperimentConfig::from_json(tiny_json(ambiguity, count));
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j, const std::string& name = "config.json") {
    std::ofstream(dir / name) << j.dump(2);
    return dir / name;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(SELFAUG_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("experiment config parsing rules") {
    auto j = tiny_json();
    CHECK_NOTHROW(ExperimentConfig::from_json(j).validate());

    auto bad = j;
    bad["colour"] = "blue";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = j;
    bad["model"]["width"] = 3;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = j;
    bad["train"]["seed"] = 99;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = j;
    bad.erase("data");
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = j;
    bad["data"]["corpus"] = "x.jsonl";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad).validate(), ConfigError);
    bad = j;
    bad["dual"]["L_i"] = 5;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad).validate(), ConfigError);

    const auto cfg = ExperimentConfig::from_json(j);
    CHECK(cfg.train.seed == 21);
    const auto again = ExperimentConfig::from_json(cfg.to_json());
    CHECK(again.to_json() == cfg.to_json());
}

TEST_CASE("relative data paths resolve against the config directory") {
    nlohmann::json j = tiny_json();
    j["data"].erase("synth");
    j["data"]["corpus"] = "corpus.jsonl";
    j["data"]["label_space"] = "labels.json";
    const auto cfg = ExperimentConfig::from_json(j, "/some/where");
    CHECK(*cfg.data.corpus == fs::path("/some/where/corpus.jsonl"));
    CHECK(*cfg.data.label_space_path == fs::path("/some/where/labels.json"));
}

TEST_CASE("grid enumeration is lexicographic in (b, alpha, L_i, L_j)") {
    auto j = tiny_json();
    j["grid"] = {{"batch_size", {16, 32}}, {"alpha", {0.1, 0.3}}, {"L_i", {0, 2}}, {"L_j", {1}}};
    const auto cells = enumerate_grid(ExperimentConfig::from_json(j));
    REQUIRE(cells.size() == 8);
    CHECK(cells[0].batch_size == 16);
    CHECK(cells[0].alpha == 0.1);
    CHECK(cells[0].tap_layer == 0);
    CHECK(cells[1].tap_layer == 2);
    CHECK(cells[2].alpha == 0.3);
    CHECK(cells[4].batch_size == 32);
    CHECK(cells[7].tap_layer == 2);

    j["grid"] = {{"alpha", {0.1}}, {"layer_pairs", {{2, 0}, {1, 1}}}};
    const auto pairs = enumerate_grid(ExperimentConfig::from_json(j));
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].tap_layer == 2);
    CHECK(pairs[0].inject_layer == 0);
    CHECK(pairs[0].batch_size == 16); // falls back to the base value

    j["grid"] = {{"L_i", {0, 3}}};
    CHECK_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);
    j["grid"] = {{"alpha", {0.1, 1.5}}};
    CHECK_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);
}

TEST_CASE("prepare_data splits, builds the vocabulary from train, and fills the model") {
    const auto cfg = tiny_config();
    const auto d = prepare_data(cfg);
    CHECK(d.train.size() == 90);
    CHECK(d.val.size() == 30);
    CHECK(d.test.size() == 30);
    CHECK(d.model.vocab_size == d.vocab.size());
    CHECK(d.model.num_labels == 2);
    CHECK(d.model.head_kind == TaskKind::binary);
    const auto again = prepare_data(cfg);
    CHECK(again.split.test == d.split.test);
    CHECK(load_all_examples(cfg) == gen_synthetic(*cfg.data.synth, cfg.seed));
}

TEST_CASE("train writes four artifacts and reruns are byte identical") {
    const auto dir = scratch("train");
    auto cfg = tiny_config();
    cfg.train.mode = TrainMode::baseline;
    run_train(cfg, {dir / "a"});
    run_train(cfg, {dir / "b"});
    for (const char* f : {"checkpoint.bin", "epochs.jsonl", "metrics.json", "config.json"}) {
        CHECK_MESSAGE(fs::exists(dir / "a" / f), f);
    }
    CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));
    CHECK(slurp(dir / "a" / "checkpoint.bin") == slurp(dir / "b" / "checkpoint.bin"));

    // The snapshot alone reproduces the run.
    const auto snap = ExperimentConfig::load(dir / "a" / "config.json");
    run_train(snap, {dir / "c"});
    CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "c" / "metrics.json"));

    const auto metrics = nlohmann::json::parse(slurp(dir / "a" / "metrics.json"));
    CHECK(metrics["mode"] == "baseline");
    CHECK(lines(slurp(dir / "a" / "epochs.jsonl")).size() == metrics["epochs_run"].get<std::size_t>());

    CHECK_THROWS_AS(run_train(cfg, {dir / "a"}), ConfigError);
    CHECK_NOTHROW(run_train(cfg, {dir / "a", true}));
    fs::remove_all(dir);
}

TEST_CASE("a missing dataset leaves no output directory") {
    const auto dir = scratch("missing");
    auto j = tiny_json();
    j["data"].erase("synth");
    j["data"]["corpus"] = (dir / "nope.jsonl").string();
    j["data"]["label_space"] = {{"task_kind", "binary"}, {"labels", {"a", "b"}}};
    const auto cfg = ExperimentConfig::from_json(j);
    CHECK_THROWS_AS(run_train(cfg, {dir / "run"}), ConfigError);
    CHECK_FALSE(fs::exists(dir / "run"));
    for (const auto& e : fs::directory_iterator(dir)) FAIL("unexpected leftover " << e.path());
    fs::remove_all(dir);
}

TEST_CASE("grid: four cells, the max-F1 winner, and recorded failures") {
    const auto dir = scratch("grid");
    auto j = tiny_json(0.2);
    j["grid"] = {{"alpha", {0.1, 0.3}}, {"layer_pairs", {{1, 1}, {2, 0}}}};
    const auto cfg = ExperimentConfig::from_json(j);
    const auto report = run_grid(cfg, {dir / "g1", false, 2});
    REQUIRE(report.rows.size() == 4);
    REQUIRE(report.winner.has_value());
    CHECK(report.failures == 0);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(report.rows[*report.winner].best_val_f1 >= report.rows[i].best_val_f1);
        if (i < *report.winner) CHECK(report.rows[i].best_val_f1 < report.rows[*report.winner].best_val_f1);
    }
    const auto csv = lines(slurp(dir / "g1" / "grid.csv"));
    REQUIRE(csv.size() == 5);
    CHECK(split_csv(csv[0]) == std::vector<std::string>{"cell", "batch_size", "alpha", "L_i", "L_j", "status",
                                                         "best_val_f1", "best_epoch", "test_precision",
                                                         "test_recall", "test_f1", "winner"});
    std::size_t marked = 0;
    for (std::size_t i = 1; i < csv.size(); ++i) marked += split_csv(csv[i]).back() == "1" ? 1 : 0;
    CHECK(marked == 1);

    // Worker count does not change the outputs.
    run_grid(cfg, {dir / "g2", false, 1});
    CHECK(slurp(dir / "g1" / "grid.csv") == slurp(dir / "g2" / "grid.csv"));

    // A batch larger than the training split fails that cell only.
    j["grid"] = {{"batch_size", {16, 500}}};
    const auto failing = run_grid(ExperimentConfig::from_json(j), {dir / "g3"});
    REQUIRE(failing.rows.size() == 2);
    CHECK(failing.failures == 1);
    CHECK(failing.rows[0].ok);
    CHECK_FALSE(failing.rows[1].ok);
    CHECK_FALSE(failing.rows[1].error.empty());
    CHECK(failing.winner == std::optional<std::size_t>{0});
    CHECK(split_csv(lines(slurp(dir / "g3" / "grid.csv"))[2])[5] == "failed");
    fs::remove_all(dir);
}

TEST_CASE("kfold: per-fold rows, exact mean, stable assignment") {
    const auto dir = scratch("kfold");
    const auto cfg = tiny_config(0.0, 100);
    const auto r = run_kfold(cfg, 2, {dir / "k1"});
    REQUIRE(r.folds.size() == 2);
    CHECK(r.folds[0].n_test + r.folds[1].n_test == 100);
    CHECK(r.mean.f1 == (r.folds[0].test.f1 + r.folds[1].test.f1) / 2.0);
    const double sd = std::sqrt(((r.folds[0].test.f1 - r.mean.f1) * (r.folds[0].test.f1 - r.mean.f1) +
                                 (r.folds[1].test.f1 - r.mean.f1) * (r.folds[1].test.f1 - r.mean.f1)) /
                                1.0);
    CHECK(r.std.f1 == doctest::Approx(sd).epsilon(1e-12));
    const auto csv = lines(slurp(dir / "k1" / "kfold.csv"));
    REQUIRE(csv.size() == 5); // header, 2 folds, mean, std
    CHECK(split_csv(csv[3])[0] == "mean");

    run_kfold(cfg, 2, {dir / "k2"});
    CHECK(slurp(dir / "k1" / "kfold.json") == slurp(dir / "k2" / "kfold.json"));
    CHECK_THROWS_AS(run_kfold(cfg, 1, {dir / "k3"}), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("ablation: three named rows, baseline consistent with train") {
    const auto dir = scratch("ablate");
    const auto cfg = tiny_config(0.2);
    const auto rows = run_ablate(cfg, {dir / "ab"});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].name == "Baseline");
    CHECK(rows[1].name == "+SA");
    CHECK(rows[2].name == "+Proposed");
    CHECK(lines(slurp(dir / "ab" / "ablation.csv")).size() == 4);

    auto base = cfg;
    base.train.mode = TrainMode::baseline;
    run_train(base, {dir / "base"});
    CHECK(slurp(dir / "base" / "metrics.json") == slurp(dir / "ab" / "runs" / "baseline" / "metrics.json"));
    const auto m = nlohmann::json::parse(slurp(dir / "base" / "metrics.json"));
    CHECK(m["test"]["macro"]["f1"].get<double>() == round6(rows[0].test.f1));
    fs::remove_all(dir);
}

TEST_CASE("export: one row per example, centered PCA columns") {
    const auto dir = scratch("export");
    auto cfg = tiny_config();
    run_train(cfg, {dir / "run"});
    ExportOptions eo;
    eo.checkpoint = dir / "run" / "checkpoint.bin";
    eo.config = cfg;
    eo.split = "val";
    eo.pca = true;
    const auto n = run_export_embeddings(eo, {dir / "emb"});
    CHECK(n == 30);
    const auto csv = lines(slurp(dir / "emb" / "embeddings.csv"));
    REQUIRE(csv.size() == n + 1);
    const auto header = split_csv(csv[0]);
    CHECK(header[0] == "id");
    CHECK(header[3] == "e0");
    CHECK(header.size() == 3 + 16 + 2);
    CHECK(header.back() == "pc2");
    double s1 = 0, s2 = 0, q1 = 0, q2 = 0;
    for (std::size_t i = 1; i < csv.size(); ++i) {
        const auto row = split_csv(csv[i]);
        const double a = std::stod(row[row.size() - 2]), b = std::stod(row.back());
        s1 += a;
        s2 += b;
        q1 += a * a;
        q2 += b * b;
    }
    CHECK(std::abs(s1 / n) < 1e-9);
    CHECK(std::abs(s2 / n) < 1e-9);
    CHECK(q1 >= q2);

    eo.layer = EmbeddingLayer::tapped;
    eo.pca = false;
    eo.split = "test";
    CHECK(run_export_embeddings(eo, {dir / "emb2"}) == 30);
    CHECK_THROWS_AS(parse_embedding_layer("middle"), ConfigError);
    eo.checkpoint = dir / "nope.bin";
    CHECK_THROWS(run_export_embeddings(eo, {dir / "emb3"}));
    CHECK_FALSE(fs::exists(dir / "emb3"));
    fs::remove_all(dir);
}

TEST_CASE("pca recovers a dominant axis") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 400; ++i) {
        const double t = 5.0 * nd(rng), u = 0.5 * nd(rng);
        rows.push_back({t + 1.0, t - u - 2.0, u});
    }
    const auto r = pca(rows, 2, 1);
    REQUIRE(r.components.size() == 2);
    CHECK(r.variances[0] >= r.variances[1]);
    CHECK(std::abs(std::abs(r.components[0][0]) - std::sqrt(0.5)) < 0.02);
    double dot = 0.0;
    for (std::size_t k = 0; k < 3; ++k) dot += r.components[0][k] * r.components[1][k];
    CHECK(std::abs(dot) < 1e-9);
    double m0 = 0.0;
    for (const auto& s : r.scores) m0 += s[0];
    CHECK(std::abs(m0 / 400) < 1e-9);
}

TEST_CASE("gen-synth writes the corpus a config trains on") {
    const auto dir = scratch("gensynth");
    const auto cfg = tiny_config();
    CHECK(run_gen_synth(*cfg.data.synth, cfg.seed, {dir / "s"}) == 150);
    const auto labels = LabelSpace::load(dir / "s" / "label_space.json");
    CHECK(load_jsonl(dir / "s" / "corpus.jsonl", labels) == load_all_examples(cfg));
    fs::remove_all(dir);
}

TEST_CASE("parallel_for runs every index and rethrows the lowest failure") {
    std::atomic<int> count{0};
    try {
        parallel_for(10, 3, [&](std::size_t i) {
            ++count;
            if (i == 7 || i == 4) throw std::runtime_error("boom " + std::to_string(i));
        });
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "boom 4");
    }
    CHECK(count == 10);
}

TEST_CASE("shipped configs load and validate") {
    const fs::path root = fs::path(SELFAUG_SOURCE_DIR) / "configs";
    for (const char* name : {"synth_binary.json", "synth_grid.json", "synth_multilabel.json"}) {
        CHECK_NOTHROW(ExperimentConfig::load(root / name).validate());
    }
    std::size_t presets = 0;
    for (const auto& e : fs::directory_iterator(root / "presets")) {
        const auto cfg = ExperimentConfig::load(e.path());
        CHECK_NOTHROW(cfg.validate());
        CHECK(cfg.train.learning_rate == 1e-5);
        CHECK(cfg.train.max_epochs == 20);
        CHECK(cfg.train.patience == 5);
        CHECK(cfg.dual.projection_dims == std::vector<std::size_t>{1024, 1024, 300});
        CHECK(cfg.grid->alpha == std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5});
        ++presets;
    }
    CHECK(presets == 6);
}

TEST_CASE("command line exit codes") {
    const auto dir = scratch("cli");
    const auto cfg_path = write_config(dir, tiny_json());
    CHECK(cli("--help") == 0);
    CHECK(cli("") == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("train --config " + (dir / "absent.json").string() + " --out " + (dir / "r0").string()) == 2);
    CHECK_FALSE(fs::exists(dir / "r0"));

    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(cli("train --config " + (dir / "broken.json").string() + " --out " + (dir / "r1").string()) == 2);

    auto bad = tiny_json();
    bad["train"]["patience"] = 9;
    const auto bad_path = write_config(dir, bad, "bad.json");
    CHECK(cli("train --config " + bad_path.string() + " --out " + (dir / "r2").string()) == 2);

    const std::string ok = "train --config " + cfg_path.string() + " --out " + (dir / "r3").string();
    CHECK(cli(ok + " --mode baseline --seed 5") == 0);
    CHECK(fs::exists(dir / "r3" / "metrics.json"));
    CHECK(cli(ok) == 2); // output exists
    CHECK(cli("train --config " + cfg_path.string() + " --mode sideways --out " + (dir / "r4").string()) == 2);

    // Output under a regular file cannot be created: a runtime failure.
    std::ofstream(dir / "plainfile") << "x";
    CHECK(cli("train --config " + cfg_path.string() + " --out " + (dir / "plainfile" / "run").string()) == 1);

    CHECK(cli("gen-synth --config " + cfg_path.string() + " --out " + (dir / "syn").string()) == 0);
    CHECK(lines(slurp(dir / "syn" / "corpus.jsonl")).size() == 150);
    CHECK(cli("export-embeddings --checkpoint " + (dir / "r3" / "checkpoint.bin").string() + " --config " +
              cfg_path.string() + " --split val --pca --out " + (dir / "emb").string()) == 0);
    CHECK(cli("export-embeddings --checkpoint " + (dir / "r3" / "checkpoint.bin").string() + " --data " +
              (dir / "syn" / "corpus.jsonl").string() + " --layer nowhere --out " + (dir / "emb2").string()) == 2);
    fs::remove_all(dir);
}
