#pragma once

#include "selfaug/harness/experiment.hpp"
#include "selfaug/metrics/metrics.hpp"
#include "selfaug/train/trainer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace selfaug {

struct RunOptions {
    std::filesystem::path out;
    bool overwrite = false;
    std::size_t workers = 1;
};

// Output directory built under a hidden sibling and renamed into place on commit,
// so a failed command leaves no partial directory behind. An existing non-empty
// target is a ConfigError unless overwrite is set.
class StagedDir {
public:
    StagedDir(std::filesystem::path target, bool overwrite);
    ~StagedDir();
    StagedDir(const StagedDir&) = delete;
    StagedDir& operator=(const StagedDir&) = delete;

    const std::filesystem::path& path() const { return staging_; }
    void commit();

private:
    std::filesystem::path target_;
    std::filesystem::path staging_;
    bool committed_ = false;
};

// Runs fn(0..n-1) on up to `workers` threads. Every index runs even if some throw;
// the first exception (lowest index) is rethrown afterwards.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

void write_text(const std::filesystem::path& path, const std::string& text);

struct TrainOutcome {
    TrainResult result;
    MetricsBundle val;
    MetricsBundle test;
    Checkpoint checkpoint; // trainer checkpoint plus vocabulary and label space
};

// Trains on prepared data and evaluates the best epoch's stream F on val and test.
TrainOutcome train_once(const ExperimentConfig& cfg, const PreparedData& data);

// {"mode","epochs_run","best_epoch","stopped_early","best_val_f1","validation","test"}
nlohmann::ordered_json metrics_json(const ExperimentConfig& cfg, const TrainOutcome& outcome);
// One EpochRecord per line.
std::string epochs_jsonl(const std::vector<EpochRecord>& epochs);
std::string dump_json(const nlohmann::ordered_json& j);

// checkpoint.bin, epochs.jsonl, metrics.json, config.json
TrainOutcome run_train(const ExperimentConfig& cfg, const RunOptions& opts);

struct GridRow {
    GridCell cell;
    bool ok = false;
    std::string error;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
    Prf test;
};

struct GridReport {
    std::vector<GridRow> rows;
    std::optional<std::size_t> winner; // argmax validation F1, first on ties
    std::size_t failures = 0;
};

// grid.csv, grid.json, config.json and cells/cell-NNNN/{metrics.json,epochs.jsonl}.
GridReport run_grid(const ExperimentConfig& cfg, const RunOptions& opts);
std::string grid_csv(const GridReport& report);

struct FoldRow {
    std::size_t fold = 0; // from 1
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    std::size_t best_epoch = 0;
    Prf test;
};

struct KFoldReport {
    std::vector<FoldRow> folds;
    Prf mean;
    Prf std; // sample standard deviation (n - 1)
    bool stratified = true;
};

// Fold i is the test set; the other folds split 80/20 into train and val.
// kfold.csv, kfold.json, config.json and folds/fold-NN/{metrics.json,epochs.jsonl}.
KFoldReport run_kfold(const ExperimentConfig& cfg, std::size_t k, const RunOptions& opts);

struct AblationRow {
    std::string name; // Baseline, +SA, +Proposed
    TrainMode mode = TrainMode::baseline;
    double best_val_f1 = 0.0;
    Prf test;
};

// Same data split and seed for all three modes. ablation.csv, ablation.json, runs/<mode>/...
std::vector<AblationRow> run_ablate(const ExperimentConfig& cfg, const RunOptions& opts);

enum class EmbeddingLayer { pooled_final, tapped };
EmbeddingLayer parse_embedding_layer(std::string_view text);

struct ExportOptions {
    std::filesystem::path checkpoint;
    std::optional<std::filesystem::path> data;  // JSONL file, or
    std::optional<ExperimentConfig> config;     // with `split`
    std::string split = "test";
    EmbeddingLayer layer = EmbeddingLayer::pooled_final;
    bool pca = false;
    std::size_t batch_size = 32;
    double threshold = 0.5;
};

// embeddings.csv: id, gold, pred, e0..e{d-1}, then pc1, pc2 when requested. Returns the row count.
std::size_t run_export_embeddings(const ExportOptions& export_opts, const RunOptions& opts);

// corpus.jsonl, label_space.json, spec.json. Draws the same corpus that a config
// with this spec and seed trains on.
std::size_t run_gen_synth(const SynthSpec& spec, std::uint64_t seed, const RunOptions& opts);

} // namespace selfaug
