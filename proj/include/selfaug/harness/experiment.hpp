#pragma once

#include "selfaug/data/batch.hpp"
#include "selfaug/data/splits.hpp"
#include "selfaug/data/synth.hpp"
#include "selfaug/data/vocab.hpp"
#include "selfaug/model/config.hpp"
#include "selfaug/objective/dual_stream.hpp"
#include "selfaug/train/trainer.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace selfaug {

// Where examples come from. Exactly one source:
//   synth        generated corpus (inline spec), split by split_ratios
//   corpus       one JSONL file, split by split_ratios
//   train/val/test  three pre-split JSONL files
// File sources also need label_space (path or inline object).
struct DataConfig {
    std::optional<SynthSpec> synth;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> train, val, test;
    std::optional<LabelSpace> label_space;
    std::optional<std::filesystem::path> label_space_path;
    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
    std::size_t min_freq = 1;
    std::size_t max_vocab = 0;
};

struct GridConfig {
    std::vector<std::size_t> batch_size;
    std::vector<double> alpha;
    std::vector<std::size_t> tap_layers;    // L_i values, crossed with inject_layers
    std::vector<std::size_t> inject_layers; // L_j values
    std::vector<std::pair<std::size_t, std::size_t>> layer_pairs; // explicit (L_i, L_j), replaces the cross product
};

struct GridCell {
    std::size_t batch_size = 0;
    double alpha = 0.0;
    std::size_t tap_layer = 0;
    std::size_t inject_layer = 0;
};

struct ExperimentConfig {
    std::uint64_t seed = 13;
    std::string description; // free text, not used by any command
    DataConfig data;
    ModelConfig model;
    DualStreamConfig dual;
    TrainConfig train;
    std::optional<GridConfig> grid;
    std::size_t kfold_k = 10;

    // Relative paths resolve against `base_dir`. Unknown keys are errors.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;

    // Checks every section; data-dependent model fields (vocab_size, num_labels,
    // head_kind) are filled in by prepare_data and not checked here.
    void validate() const;
};

// Grid cells in lexicographic order of (batch_size, alpha, L_i, L_j), each list in
// the order given; missing lists fall back to the single base value.
std::vector<GridCell> enumerate_grid(const ExperimentConfig& cfg);
ExperimentConfig apply_cell(ExperimentConfig cfg, const GridCell& cell);

struct PreparedData {
    LabelSpace labels;
    Vocabulary vocab;
    SplitResult split;
    EncodedDataset train, val, test;
    ModelConfig model; // cfg.model with vocab_size, num_labels and head_kind filled in
};

LabelSpace resolve_label_space(const DataConfig& data);
// Every example of the configured source; synthetic corpora are drawn with cfg.seed.
std::vector<Example> load_all_examples(const ExperimentConfig& cfg);
// Vocabulary from the training split only.
PreparedData prepare_splits(const ExperimentConfig& cfg, SplitResult split);
PreparedData prepare_data(const ExperimentConfig& cfg);

} // namespace selfaug
