#pragma once

#include "selfaug/data/batch.hpp"
#include "selfaug/model/config.hpp"
#include "selfaug/tensor/graph.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace selfaug {

// Tensor summed into hidden state `layer` before the next layer reads it
// (layer 0 = embedding output, layer n_layers = after the last encoder layer).
struct Injection {
    std::size_t layer = 0;
    Var tensor;
};

struct ForwardOutput {
    Var logits;              // [batch, num_outputs]
    std::vector<Var> hidden; // H_0..H_L, each [batch, seq, d_model]; H_j is post-injection
    Var pooled;              // classifier input, CLS of H_L
};

// Post-layer-norm transformer encoder with learned positions and a linear
// classification head on the CLS vector of the last layer. Layer l:
//   x = LN(x + Dropout(MHA(x)))
//   x = LN(x + Dropout(W2 gelu(W1 x + b1) + b2))
class EncoderModel {
public:
    // Weights ~ N(0, 0.02), biases 0, layer-norm gains 1.
    static EncoderModel init(const ModelConfig& config, std::uint64_t seed);
    // Adopts parameters loaded elsewhere; names and shapes must match init's layout.
    EncoderModel(const ModelConfig& config, ParamStore params);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Dropout is active only in train mode and then draws from `dropout_rng`.
    ForwardOutput forward(Graph& g, const Batch& batch, Mode mode, const std::optional<Injection>& injection = {},
                          std::mt19937_64* dropout_rng = nullptr);

private:
    struct LayerIndex {
        std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
        std::size_t ln1_gain, ln1_bias;
        std::size_t w1, b1, w2, b2;
        std::size_t ln2_gain, ln2_bias;
    };

    explicit EncoderModel(const ModelConfig& config);
    void register_layout(std::mt19937_64* rng);
    Var encoder_layer(Graph& g, Var x, const LayerIndex& idx, const Batch& batch, Mode mode,
                      std::mt19937_64* dropout_rng);

    ModelConfig config_;
    ParamStore params_;
    std::size_t tok_emb_ = 0, pos_emb_ = 0, emb_gain_ = 0, emb_bias_ = 0, head_w_ = 0, head_b_ = 0;
    std::vector<LayerIndex> layers_;
};

// Sentence vector of a [batch, seq, d] hidden state: position 0, or the mean over
// real tokens. Every row needs at least one real token.
Var pool(Var hidden, const Tensor& mask, Pooling kind);

// Label indices per row. Single-label heads take the argmax (ties -> lower index).
// Multilabel heads keep labels with sigmoid(logit) >= threshold, falling back to
// the top-1 label when none clears it.
std::vector<std::vector<int>> predict(const Tensor& logits, TaskKind head_kind, double threshold);

} // namespace selfaug
