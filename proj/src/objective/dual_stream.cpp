#include "selfaug/objective/dual_stream.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/tensor/ops.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace selfaug {

std::string_view to_string(AugmentGradient g) { return g == AugmentGradient::stop ? "stop" : "flow"; }

AugmentGradient parse_augment_gradient(std::string_view text) {
    if (text == "stop") return AugmentGradient::stop;
    if (text == "flow") return AugmentGradient::flow;
    throw ConfigError(fmt::format("augment_gradient must be 'stop' or 'flow', got '{}'", text));
}

void DualStreamConfig::validate(std::size_t n_layers) const {
    if (tap_layer > n_layers) throw ConfigError(fmt::format("L_i {} outside [0, {}]", tap_layer, n_layers));
    if (inject_layer > n_layers) throw ConfigError(fmt::format("L_j {} outside [0, {}]", inject_layer, n_layers));
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError(fmt::format("alpha {} outside [0, 1]", alpha));
    if (!(lambda_offdiag > 0.0)) throw ConfigError(fmt::format("lambda_offdiag must be > 0, got {}", lambda_offdiag));
    if (projection_dims.empty()) throw ConfigError("projection_dims must not be empty");
    for (auto d : projection_dims) {
        if (d == 0) throw ConfigError("projection_dims entries must be positive");
    }
}

nlohmann::json DualStreamConfig::to_json() const {
    return {{"L_i", tap_layer},
            {"L_j", inject_layer},
            {"alpha", alpha},
            {"augment_gradient", to_string(augment_gradient)},
            {"pooling", to_string(pooling)},
            {"lambda_offdiag", lambda_offdiag},
            {"projection_dims", projection_dims},
            {"tie_weights", tie_weights}};
}

DualStreamConfig DualStreamConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("dual config must be an object");
    static const std::vector<std::string> known{"L_i",     "L_j",         "alpha",           "augment_gradient",
                                                "pooling", "lambda_offdiag", "projection_dims", "tie_weights"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError(fmt::format("dual: unknown key '{}'", key));
        }
    }
    DualStreamConfig c;
    try {
        if (j.contains("L_i")) c.tap_layer = j.at("L_i").get<std::size_t>();
        if (j.contains("L_j")) c.inject_layer = j.at("L_j").get<std::size_t>();
        if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
        if (j.contains("augment_gradient")) {
            c.augment_gradient = parse_augment_gradient(j.at("augment_gradient").get<std::string>());
        }
        if (j.contains("pooling")) c.pooling = parse_pooling(j.at("pooling").get<std::string>());
        if (j.contains("lambda_offdiag")) c.lambda_offdiag = j.at("lambda_offdiag").get<double>();
        if (j.contains("projection_dims")) c.projection_dims = j.at("projection_dims").get<std::vector<std::size_t>>();
        if (j.contains("tie_weights")) c.tie_weights = j.at("tie_weights").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("dual: {}", e.what()));
    }
    return c;
}

StepLosses composite_loss(double ce_f, double ce_c, double contrastive, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError(fmt::format("alpha {} outside [0, 1]", alpha));
    StepLosses s{ce_f, ce_c, contrastive, 0.0};
    s.total = (ce_f + ce_c) * ((1.0 - alpha) / 2.0) + contrastive * alpha;
    return s;
}

Var composite_total(Var ce_f, Var ce_c, Var contrastive, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError(fmt::format("alpha {} outside [0, 1]", alpha));
    return add(scale(add(ce_f, ce_c), (1.0 - alpha) / 2.0), scale(contrastive, alpha));
}

Var classification_loss(Var logits, const Batch& batch, TaskKind head_kind) {
    if (head_kind == TaskKind::multilabel) return binary_cross_entropy_with_logits(logits, batch.multilabel_targets);
    return cross_entropy(logits, batch.class_targets);
}

DualOutputs dual_forward(Graph& g, EncoderModel& model_f, EncoderModel& model_c, const Batch& batch,
                         const DualStreamConfig& cfg, Mode mode, const DualForwardOptions& options) {
    if (!(model_f.config() == model_c.config())) throw ConfigError("dual streams need identical model configs");
    cfg.validate(model_f.config().n_layers);
    if (batch.batch < 2) throw ConfigError("dual-stream step needs a batch of at least 2");

    DualOutputs out;
    out.f = model_f.forward(g, batch, mode, std::nullopt, options.dropout_f);
    Var h_i = out.f.hidden.at(cfg.tap_layer);
    if (options.zero_injection) {
        out.injected = g.constant(Tensor::zeros_like(h_i.value()));
    } else {
        out.injected = cfg.augment_gradient == AugmentGradient::stop ? detach(h_i) : h_i;
    }
    out.c = model_c.forward(g, batch, mode, Injection{cfg.inject_layer, out.injected}, options.dropout_c);
    out.pooled_i = pool(h_i, batch.mask, cfg.pooling);
    out.pooled_j = pool(out.c.hidden.at(cfg.inject_layer), batch.mask, cfg.pooling);
    return out;
}

} // namespace selfaug
