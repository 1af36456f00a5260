#pragma once

#include "selfaug/tensor/graph.hpp"

#include <cstdint>
#include <random>
#include <span>

// Differentiable operations over Graph nodes. Every op records its output on the
// graph of its first input; all inputs must live on the same graph.

namespace selfaug {

enum class ElementwiseKind { add, sub, mul };
enum class UnaryKind { relu, gelu, exp, log, sqrt, neg };

// [.., m, k] x [.., k, n] -> [.., m, n]. Batch dimensions must match, or one side
// must be a plain matrix, which is then broadcast across the other's batch.
Var matmul(Var a, Var b);

// Identical shapes only; see add_bcast / mul_bcast for the broadcasting forms.
Var elementwise(Var a, Var b, ElementwiseKind kind);
inline Var add(Var a, Var b) { return elementwise(a, b, ElementwiseKind::add); }
inline Var sub(Var a, Var b) { return elementwise(a, b, ElementwiseKind::sub); }
inline Var mul(Var a, Var b) { return elementwise(a, b, ElementwiseKind::mul); }

// `b`'s shape must equal a trailing suffix of `a`'s shape (bias vectors, position tables).
Var add_bcast(Var a, Var b);
Var mul_bcast(Var a, Var b);

Var scale(Var a, double factor);

// gelu uses the tanh approximation
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
// log requires x > 0 and sqrt requires x >= 0; violations raise NumericDomainError.
Var unary(Var a, UnaryKind kind);
inline Var relu(Var a) { return unary(a, UnaryKind::relu); }
inline Var gelu(Var a) { return unary(a, UnaryKind::gelu); }
inline Var exp(Var a) { return unary(a, UnaryKind::exp); }
inline Var log(Var a) { return unary(a, UnaryKind::log); }
inline Var sqrt(Var a) { return unary(a, UnaryKind::sqrt); }
inline Var neg(Var a) { return unary(a, UnaryKind::neg); }

// Softmax over the last axis, max-subtracted.
Var softmax_rows(Var a);

// Softmax over the last axis of a [B, ..., n] tensor where key positions with
// key_mask[b, j] == 0 get exactly zero weight. Every row needs one unmasked key.
Var masked_softmax_rows(Var a, const Tensor& key_mask);

// Normalizes over the last axis with population variance, then gain * x + bias.
Var layer_norm(Var a, Var gain, Var bias, double eps);

// Normalizes each column of a [batch, d] tensor with its batch mean and population
// variance: (x - mean) / sqrt(var + eps). No affine part. batch must be >= 2.
Var batch_norm_features(Var a, double eps);

// Mean over the batch of -log softmax(logits)[target].
Var cross_entropy(Var logits, std::span<const int> targets);

// Mean over batch x labels of max(x, 0) - x t + log(1 + exp(-|x|)); targets must be 0 or 1.
Var binary_cross_entropy_with_logits(Var logits, const Tensor& targets);

Var sum(Var a);
Var mean(Var a);

Var reshape(Var a, Shape shape);
Var permute(Var a, const std::vector<std::size_t>& axes);
// Swaps the last two axes.
Var transpose(Var a);

// Gathers rows of a [vocab, d] table; output shape is index_shape + [d].
Var embedding(Var table, std::span<const std::int32_t> ids, const Shape& index_shape);

// Rows [begin, begin + count) along axis 0.
Var slice_rows(Var a, std::size_t begin, std::size_t count);

// [B, S, d] -> [B, d] at sequence position `pos`.
Var select_position(Var hidden, std::size_t pos);

// [B, S, d] with mask [B, S] -> mask-weighted mean over S, [B, d].
Var masked_mean(Var hidden, const Tensor& mask);

// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, std::mt19937_64& rng);

// Same value, cut from the graph: gradients stop here.
Var detach(Var a);

} // namespace selfaug
