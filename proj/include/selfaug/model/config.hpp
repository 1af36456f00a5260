#pragma once

#include "selfaug/data/label_space.hpp"

#include "json.hpp"

#include <cstddef>

namespace selfaug {

enum class Mode { train, eval };
enum class Pooling { cls, mean };

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view text);

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 64;
    std::size_t max_seq_len = 128;
    double dropout_rate = 0.1;
    TaskKind head_kind = TaskKind::binary;
    std::size_t num_labels = 2;
    double layer_norm_eps = 1e-12;

    // Throws ConfigError on d_model % n_heads != 0, n_layers == 0, dropout outside [0, 1), ...
    void validate() const;
    std::size_t head_dim() const { return d_model / n_heads; }
    // Width of the classification head: 2 for binary, one logit per class or label otherwise.
    std::size_t num_outputs() const { return head_kind == TaskKind::binary ? 2 : num_labels; }

    nlohmann::json to_json() const;
    // Missing keys keep their defaults.
    static ModelConfig from_json(const nlohmann::json& j);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

} // namespace selfaug
