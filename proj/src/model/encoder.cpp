#include "selfaug/model/encoder.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace selfaug {
namespace {

constexpr double kInitStd = 0.02;

Tensor normal_tensor(Shape shape, std::mt19937_64* rng) {
    Tensor t(std::move(shape));
    if (rng == nullptr) return t;
    std::normal_distribution<double> dist(0.0, kInitStd);
    for (double& v : t.values()) v = dist(*rng);
    return t;
}

Var linear(Graph& g, Var x, Parameter& w, Parameter& b) { return add_bcast(matmul(x, g.param(w)), g.param(b)); }

Var maybe_dropout(Var x, double rate, Mode mode, std::mt19937_64* rng) {
    if (mode != Mode::train || rate == 0.0) return x;
    if (rng == nullptr) throw ConfigError("train-mode forward with dropout needs a dropout generator");
    return dropout(x, rate, *rng);
}

} // namespace

EncoderModel::EncoderModel(const ModelConfig& config) : config_(config) { config_.validate(); }

EncoderModel EncoderModel::init(const ModelConfig& config, std::uint64_t seed) {
    EncoderModel m(config);
    std::mt19937_64 rng(seed);
    m.register_layout(&rng);
    return m;
}

EncoderModel::EncoderModel(const ModelConfig& config, ParamStore params) : EncoderModel(config) {
    register_layout(nullptr);
    if (params.size() != params_.size()) {
        throw ConfigError(fmt::format("model expects {} parameter arrays, got {}", params_.size(), params.size()));
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params[i].name != params_[i].name || params[i].value.shape() != params_[i].value.shape()) {
            throw ConfigError(fmt::format("parameter {} is '{}' {}, expected '{}' {}", i, params[i].name,
                                          to_string(params[i].value.shape()), params_[i].name,
                                          to_string(params_[i].value.shape())));
        }
        params_[i].value = std::move(params[i].value);
    }
}

void EncoderModel::register_layout(std::mt19937_64* rng) {
    const std::size_t d = config_.d_model;
    const std::size_t ff = config_.d_ff;
    auto ones = [](std::size_t n) { return Tensor({n}, 1.0); };
    auto zeros = [](std::size_t n) { return Tensor({n}); };

    tok_emb_ = params_.add("embeddings.token", normal_tensor({config_.vocab_size, d}, rng));
    pos_emb_ = params_.add("embeddings.position", normal_tensor({config_.max_seq_len, d}, rng));
    emb_gain_ = params_.add("embeddings.ln.gain", ones(d));
    emb_bias_ = params_.add("embeddings.ln.bias", zeros(d));
    layers_.clear();
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const std::string p = fmt::format("layer{}.", l);
        LayerIndex idx{};
        idx.wq = params_.add(p + "attn.wq", normal_tensor({d, d}, rng));
        idx.bq = params_.add(p + "attn.bq", zeros(d));
        idx.wk = params_.add(p + "attn.wk", normal_tensor({d, d}, rng));
        idx.bk = params_.add(p + "attn.bk", zeros(d));
        idx.wv = params_.add(p + "attn.wv", normal_tensor({d, d}, rng));
        idx.bv = params_.add(p + "attn.bv", zeros(d));
        idx.wo = params_.add(p + "attn.wo", normal_tensor({d, d}, rng));
        idx.bo = params_.add(p + "attn.bo", zeros(d));
        idx.ln1_gain = params_.add(p + "ln1.gain", ones(d));
        idx.ln1_bias = params_.add(p + "ln1.bias", zeros(d));
        idx.w1 = params_.add(p + "ffn.w1", normal_tensor({d, ff}, rng));
        idx.b1 = params_.add(p + "ffn.b1", zeros(ff));
        idx.w2 = params_.add(p + "ffn.w2", normal_tensor({ff, d}, rng));
        idx.b2 = params_.add(p + "ffn.b2", zeros(d));
        idx.ln2_gain = params_.add(p + "ln2.gain", ones(d));
        idx.ln2_bias = params_.add(p + "ln2.bias", zeros(d));
        layers_.push_back(idx);
    }
    head_w_ = params_.add("head.w", normal_tensor({d, config_.num_outputs()}, rng));
    head_b_ = params_.add("head.b", zeros(config_.num_outputs()));
}

Var EncoderModel::encoder_layer(Graph& g, Var x, const LayerIndex& idx, const Batch& batch, Mode mode,
                                std::mt19937_64* dropout_rng) {
    const std::size_t B = batch.batch;
    const std::size_t S = batch.seq;
    const std::size_t H = config_.n_heads;
    const std::size_t dh = config_.head_dim();
    const std::size_t d = config_.d_model;

    auto heads = [&](Var t) { return permute(reshape(t, {B, S, H, dh}), {0, 2, 1, 3}); };
    Var q = heads(linear(g, x, params_[idx.wq], params_[idx.bq]));
    Var k = heads(linear(g, x, params_[idx.wk], params_[idx.bk]));
    Var v = heads(linear(g, x, params_[idx.wv], params_[idx.bv]));

    Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var probs = masked_softmax_rows(scores, batch.mask);
    Var ctx = reshape(permute(matmul(probs, v), {0, 2, 1, 3}), {B, S, d});
    Var attn = maybe_dropout(linear(g, ctx, params_[idx.wo], params_[idx.bo]), config_.dropout_rate, mode,
                             dropout_rng);
    x = layer_norm(add(x, attn), g.param(params_[idx.ln1_gain]), g.param(params_[idx.ln1_bias]),
                   config_.layer_norm_eps);

    Var h = gelu(linear(g, x, params_[idx.w1], params_[idx.b1]));
    h = maybe_dropout(linear(g, h, params_[idx.w2], params_[idx.b2]), config_.dropout_rate, mode, dropout_rng);
    return layer_norm(add(x, h), g.param(params_[idx.ln2_gain]), g.param(params_[idx.ln2_bias]),
                      config_.layer_norm_eps);
}

ForwardOutput EncoderModel::forward(Graph& g, const Batch& batch, Mode mode, const std::optional<Injection>& injection,
                                    std::mt19937_64* dropout_rng) {
    const std::size_t B = batch.batch;
    const std::size_t S = batch.seq;
    if (B == 0 || S == 0) throw DimensionError("forward: empty batch");
    if (S > config_.max_seq_len) {
        throw DimensionError(fmt::format("forward: sequence length {} exceeds max_seq_len {}", S, config_.max_seq_len));
    }
    if (injection) {
        if (injection->layer > config_.n_layers) {
            throw DimensionError(
                fmt::format("injection layer {} outside [0, {}]", injection->layer, config_.n_layers));
        }
        const Shape expected{B, S, config_.d_model};
        if (injection->tensor.shape() != expected) {
            throw DimensionError(fmt::format("injection tensor {} does not match hidden state {}",
                                             to_string(injection->tensor.shape()), to_string(expected)));
        }
    }
    auto inject = [&](Var h, std::size_t layer) {
        return injection && injection->layer == layer ? add(h, injection->tensor) : h;
    };

    ForwardOutput out;
    Var x = embedding(g.param(params_[tok_emb_]), batch.token_ids, {B, S});
    x = add_bcast(x, slice_rows(g.param(params_[pos_emb_]), 0, S));
    x = layer_norm(x, g.param(params_[emb_gain_]), g.param(params_[emb_bias_]), config_.layer_norm_eps);
    x = inject(maybe_dropout(x, config_.dropout_rate, mode, dropout_rng), 0);
    out.hidden.push_back(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        x = inject(encoder_layer(g, x, layers_[l], batch, mode, dropout_rng), l + 1);
        out.hidden.push_back(x);
    }
    out.pooled = select_position(x, 0);
    out.logits = linear(g, out.pooled, params_[head_w_], params_[head_b_]);
    return out;
}

Var pool(Var hidden, const Tensor& mask, Pooling kind) {
    if (kind == Pooling::cls) return select_position(hidden, 0);
    return masked_mean(hidden, mask);
}

std::vector<std::vector<int>> predict(const Tensor& logits, TaskKind head_kind, double threshold) {
    if (logits.rank() != 2) throw DimensionError("predict: logits must be [batch, outputs]");
    const std::size_t rows = logits.dim(0);
    const std::size_t cols = logits.dim(1);
    std::vector<std::vector<int>> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < cols; ++c) {
            if (logits.at(r, c) > logits.at(r, best)) best = c;
        }
        if (head_kind == TaskKind::multilabel) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double p = 1.0 / (1.0 + std::exp(-logits.at(r, c)));
                if (p >= threshold) out[r].push_back(static_cast<int>(c));
            }
        }
        if (out[r].empty()) out[r].push_back(static_cast<int>(best));
    }
    return out;
}

} // namespace selfaug
