#pragma once

#include "selfaug/model/encoder.hpp"
#include "selfaug/objective/contrastive.hpp"

#include "json.hpp"

#include <random>
#include <vector>

namespace selfaug {

enum class AugmentGradient { stop, flow };

std::string_view to_string(AugmentGradient g);
AugmentGradient parse_augment_gradient(std::string_view text);

struct DualStreamConfig {
    std::size_t tap_layer = 0;    // L_i, hidden state of F that is copied
    std::size_t inject_layer = 0; // L_j, hidden state of C it is added to
    double alpha = 0.1;
    AugmentGradient augment_gradient = AugmentGradient::stop;
    Pooling pooling = Pooling::cls;
    double lambda_offdiag = kDefaultRedundancyWeight;
    std::vector<std::size_t> projection_dims{1024, 1024, 300};
    bool tie_weights = false; // C shares F's parameters instead of owning a copy

    void validate(std::size_t n_layers) const;
    nlohmann::json to_json() const;
    static DualStreamConfig from_json(const nlohmann::json& j);

    friend bool operator==(const DualStreamConfig&, const DualStreamConfig&) = default;
};

struct StepLosses {
    double ce_f = 0.0;
    double ce_c = 0.0;
    double contrastive = 0.0;
    double total = 0.0;
};

// total = (1 - alpha)/2 * (ce_f + ce_c) + alpha * contrastive. ConfigError unless alpha in [0, 1].
StepLosses composite_loss(double ce_f, double ce_c, double contrastive, double alpha);
// Same expression on graph nodes, evaluated in the same order so values agree bitwise.
Var composite_total(Var ce_f, Var ce_c, Var contrastive, double alpha);

// Cross entropy for single-label heads, mean binary cross entropy for multilabel ones.
Var classification_loss(Var logits, const Batch& batch, TaskKind head_kind);

struct DualOutputs {
    ForwardOutput f;
    ForwardOutput c;
    Var injected; // what was added into C's H_j
    Var pooled_i; // pooled H_i of F
    Var pooled_j; // pooled post-injection H_j of C
};

struct DualForwardOptions {
    // Inject zeros instead of H_i (ablation anchor).
    bool zero_injection = false;
    std::mt19937_64* dropout_f = nullptr;
    std::mt19937_64* dropout_c = nullptr;
};

// Runs F, taps H_i, then runs C with H_i added to its H_j. With augment_gradient = stop
// the injected copy is a constant for C's backward; the pooled states always stay on
// the graph, so contrastive gradients reach both encoders. `model_c` may be `model_f`
// itself (tied weights).
DualOutputs dual_forward(Graph& g, EncoderModel& model_f, EncoderModel& model_c, const Batch& batch,
                         const DualStreamConfig& cfg, Mode mode, const DualForwardOptions& options = {});

} // namespace selfaug
