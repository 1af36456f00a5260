#include "selfaug/model/config.hpp"

#include "selfaug/errors.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace selfaug {

std::string_view to_string(Pooling pooling) { return pooling == Pooling::cls ? "cls" : "mean"; }

Pooling parse_pooling(std::string_view text) {
    if (text == "cls") return Pooling::cls;
    if (text == "mean") return Pooling::mean;
    throw ConfigError(fmt::format("unknown pooling '{}' (cls|mean)", text));
}

void ModelConfig::validate() const {
    if (vocab_size <= 3) throw ConfigError(fmt::format("vocab_size {} leaves no room past the reserved ids", vocab_size));
    if (d_model == 0 || n_heads == 0) throw ConfigError("d_model and n_heads must be positive");
    if (d_model % n_heads != 0) {
        throw ConfigError(fmt::format("d_model {} is not divisible by n_heads {}", d_model, n_heads));
    }
    if (n_layers == 0) throw ConfigError("n_layers must be at least 1");
    if (d_ff == 0) throw ConfigError("d_ff must be positive");
    if (max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw ConfigError(fmt::format("dropout_rate {} outside [0, 1)", dropout_rate));
    }
    if (head_kind == TaskKind::binary && num_labels != 2) throw ConfigError("binary head needs num_labels = 2");
    if (num_labels < 2) throw ConfigError("num_labels must be at least 2");
    if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{{"vocab_size", vocab_size},         {"d_model", d_model},
                          {"n_heads", n_heads},               {"n_layers", n_layers},
                          {"d_ff", d_ff},                     {"max_seq_len", max_seq_len},
                          {"dropout_rate", dropout_rate},     {"head_kind", std::string(to_string(head_kind))},
                          {"num_labels", num_labels},         {"layer_norm_eps", layer_norm_eps}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    static constexpr std::string_view known[] = {"vocab_size", "d_model",   "n_heads",      "n_layers",
                                                  "d_ff",       "max_seq_len", "dropout_rate", "head_kind",
                                                  "num_labels", "layer_norm_eps"};
    if (!j.is_object()) throw ConfigError("model config must be an object");
    for (const auto& item : j.items()) {
        if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known)) {
            throw ConfigError(fmt::format("model: unknown key '{}'", item.key()));
        }
    }
    try {
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.d_model = j.value("d_model", c.d_model);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.n_layers = j.value("n_layers", c.n_layers);
        c.d_ff = j.value("d_ff", c.d_ff);
        c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
        c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
        if (j.contains("head_kind")) c.head_kind = parse_task_kind(j.at("head_kind").get<std::string>());
        c.num_labels = j.value("num_labels", c.num_labels);
        c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("model config: {}", e.what()));
    }
    return c;
}

} // namespace selfaug
