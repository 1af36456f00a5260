#pragma once

#include "selfaug/data/batch.hpp"
#include "selfaug/metrics/metrics.hpp"
#include "selfaug/model/checkpoint.hpp"
#include "selfaug/model/encoder.hpp"
#include "selfaug/objective/dual_stream.hpp"
#include "selfaug/objective/projection.hpp"
#include "selfaug/train/adam.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace selfaug {

enum class TrainMode { baseline, sa_only, proposed };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t max_epochs = 20;
    std::size_t patience = 5;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::proposed;
    double threshold = 0.5; // multilabel decision threshold during validation
    double adam_eps = 1e-8;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
    std::size_t epoch = 0; // from 1
    StepLosses train_loss; // means over the epoch's steps
    Prf val;               // macro averaged
    double seconds = 0.0;

    nlohmann::ordered_json to_json(bool include_seconds = true) const;
};

// Named seed streams derived from TrainConfig::seed. A reference loop that wants
// to follow the trainer step for step uses the same names.
namespace seed_streams {
inline constexpr std::string_view init_f = "init.f";
inline constexpr std::string_view init_projection = "init.projection";
inline constexpr std::string_view shuffle = "shuffle"; // epoch e uses derive_seed(derive_seed(seed, shuffle), e)
inline constexpr std::string_view dropout_f = "dropout.f";
inline constexpr std::string_view dropout_c = "dropout.c";
} // namespace seed_streams

std::uint64_t epoch_shuffle_seed(std::uint64_t seed, std::size_t epoch);

struct StepInfo {
    std::size_t epoch = 0;
    std::size_t step = 0; // within the epoch, from 0
    StepLosses losses;
};

struct TrainerOptions {
    // Ablation anchor: C receives zeros instead of H_i.
    bool zero_injection = false;
    std::function<void(const StepInfo&)> on_step;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
    bool stopped_early = false;
};

// Owns stream F, and when the mode needs them stream C (a copy of F) and the
// shared projection network, plus one Adam state per parameter set.
class Trainer {
public:
    Trainer(const ModelConfig& model, const DualStreamConfig& dual, const TrainConfig& train,
            TrainerOptions options = {});

    // One optimizer step on `batch`. Returns the losses of the step.
    StepLosses step(const Batch& batch);

    // Full protocol: epochs over `train_set`, validation on `val_set` with stream F,
    // early stopping, then every component is restored to the best epoch.
    TrainResult fit(const EncodedDataset& train_set, const EncodedDataset& val_set);

    EncoderModel& model_f() { return f_; }
    const EncoderModel& model_f() const { return f_; }
    EncoderModel* model_c() { return tied() ? &f_ : (c_ ? &*c_ : nullptr); }
    ProjectionNetwork* projection() { return proj_ ? &*proj_ : nullptr; }
    const Adam& adam_f() const { return adam_f_; }

    const ModelConfig& model_config() const { return f_.config(); }
    const DualStreamConfig& dual_config() const { return dual_; }
    const TrainConfig& train_config() const { return train_; }

    // F as "model.*", C as "model_c.*", projection weights and running statistics,
    // and the optimizer moments; meta carries the three configs and the step counts.
    Checkpoint checkpoint() const;

private:
    struct Snapshot {
        ParamStore f, c, proj, proj_stats;
        std::vector<Adam> adams;
    };

    bool tied() const { return dual_.tie_weights && train_.mode != TrainMode::baseline; }
    Snapshot snapshot() const;
    void restore(const Snapshot& s);
    void zero_grads();

    DualStreamConfig dual_;
    TrainConfig train_;
    TrainerOptions options_;
    EncoderModel f_;
    std::optional<EncoderModel> c_;
    std::optional<ProjectionNetwork> proj_;
    Adam adam_f_;
    std::optional<Adam> adam_c_;
    std::optional<Adam> adam_proj_;
    std::mt19937_64 dropout_f_;
    std::mt19937_64 dropout_c_;
};

// Eval-mode predictions of `model` over `data`, in dataset order.
std::vector<LabelSet> predict_dataset(EncoderModel& model, const EncodedDataset& data, std::size_t batch_size,
                                      double threshold);

MetricsBundle evaluate(EncoderModel& model, const EncodedDataset& data, std::size_t batch_size, double threshold);

} // namespace selfaug
