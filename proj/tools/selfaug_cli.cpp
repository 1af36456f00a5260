#include "selfaug/errors.hpp"
#include "selfaug/harness/commands.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>
#include <fstream>

namespace fs = std::filesystem;
using namespace selfaug;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::size_t workers = 1;
    bool overwrite = false;
};

ExperimentConfig load_config(const Globals& g) {
    if (g.config.empty()) throw ConfigError("--config is required");
    ExperimentConfig cfg = ExperimentConfig::load(g.config);
    if (g.seed) cfg.seed = cfg.train.seed = *g.seed;
    return cfg;
}

RunOptions run_options(const Globals& g) { return {g.out, g.overwrite, g.workers}; }

// A bare synth spec, or an experiment config whose data section holds one.
SynthSpec load_synth_spec(const Globals& g) {
    if (g.config.empty()) throw ConfigError("--config is required");
    std::ifstream in(g.config);
    if (!in) throw ConfigError(fmt::format("cannot open config {}", g.config));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("{}: {}", g.config, e.what()));
    }
    if (j.contains("data")) {
        const ExperimentConfig cfg = ExperimentConfig::from_json(j, fs::path(g.config).parent_path());
        if (!cfg.data.synth) throw ConfigError("config has no data.synth section");
        return *cfg.data.synth;
    }
    return SynthSpec::from_json(j);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-stream self-augmented fine-tuning with a redundancy-reduction contrastive loss"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Experiment config (JSON)");
    app.add_option("--seed", g.seed, "Master seed; overrides the config");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--workers", g.workers, "Parallel runs for grid, kfold and ablate")->check(CLI::PositiveNumber);
    app.add_flag("--overwrite", g.overwrite, "Replace an existing output directory");

    auto* train = app.add_subcommand("train", "Train one model and write checkpoint, logs and metrics");
    std::string mode;
    train->add_option("--mode", mode, "baseline | sa_only | proposed (overrides the config)");

    app.add_subcommand("grid", "Grid search over batch size, alpha and layer pairs");

    auto* kfold = app.add_subcommand("kfold", "k-fold cross validation");
    std::optional<std::size_t> k;
    kfold->add_option("--k", k, "Number of folds (default: config kfold_k)");

    app.add_subcommand("ablate", "Baseline vs +SA vs +Proposed on one split");

    auto* exp = app.add_subcommand("export-embeddings", "Write per-example embeddings as CSV");
    std::string checkpoint, data, split = "test", layer = "pooled_final";
    bool with_pca = false;
    std::size_t batch_size = 32;
    exp->add_option("--checkpoint", checkpoint, "checkpoint.bin from a train run")->required();
    exp->add_option("--data", data, "JSONL examples to embed");
    exp->add_option("--split", split, "train | val | test of --config's data (default test)");
    exp->add_option("--layer", layer, "pooled_final | tapped");
    exp->add_flag("--pca", with_pca, "Append two principal-component columns");
    exp->add_option("--batch-size", batch_size, "Inference batch size")->check(CLI::PositiveNumber);

    app.add_subcommand("gen-synth", "Generate a synthetic corpus from a spec");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        const RunOptions opts = run_options(g);
        if (train->parsed()) {
            ExperimentConfig cfg = load_config(g);
            if (!mode.empty()) cfg.train.mode = parse_train_mode(mode);
            run_train(cfg, opts);
        } else if (app.got_subcommand("grid")) {
            run_grid(load_config(g), opts);
        } else if (kfold->parsed()) {
            const ExperimentConfig cfg = load_config(g);
            run_kfold(cfg, k.value_or(cfg.kfold_k), opts);
        } else if (app.got_subcommand("ablate")) {
            run_ablate(load_config(g), opts);
        } else if (exp->parsed()) {
            ExportOptions eo;
            eo.checkpoint = checkpoint;
            if (!data.empty()) eo.data = fs::path(data);
            if (!g.config.empty()) eo.config = load_config(g);
            eo.split = split;
            eo.layer = parse_embedding_layer(layer);
            eo.pca = with_pca;
            eo.batch_size = batch_size;
            const auto rows = run_export_embeddings(eo, opts);
            fmt::print(stderr, "export-embeddings: {} rows\n", rows);
        } else if (app.got_subcommand("gen-synth")) {
            const SynthSpec spec = load_synth_spec(g);
            const auto n = run_gen_synth(spec, g.seed.value_or(13), opts);
            fmt::print(stderr, "gen-synth: {} examples\n", n);
        }
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const ParseError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const ValidationError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kRuntimeError;
    }
    return kOk;
}
