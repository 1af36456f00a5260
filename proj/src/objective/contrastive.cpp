#include "selfaug/objective/contrastive.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/tensor/ops.hpp"

#include <fmt/format.h>

namespace selfaug {

ContrastiveResult contrastive_loss(Var z_a, Var z_b, double lambda, double eps) {
    if (z_a.value().rank() != 2 || z_a.shape() != z_b.shape()) {
        throw DimensionError(fmt::format("contrastive loss needs two equal [batch, d] inputs, got {} and {}",
                                         to_string(z_a.shape()), to_string(z_b.shape())));
    }
    if (lambda < 0.0) throw ConfigError(fmt::format("redundancy weight must be >= 0, got {}", lambda));
    const std::size_t batch = z_a.shape()[0];
    const std::size_t d = z_a.shape()[1];
    if (batch < 2) throw ConfigError("contrastive loss needs a batch of at least 2");

    Graph& g = z_a.graph();
    Var na = batch_norm_features(z_a, eps);
    Var nb = batch_norm_features(z_b, eps);
    Var m = scale(matmul(transpose(na), nb), 1.0 / static_cast<double>(batch));

    Tensor identity({d, d});
    Tensor weights({d, d}, lambda);
    for (std::size_t i = 0; i < d; ++i) {
        identity[i * d + i] = 1.0;
        weights[i * d + i] = 1.0;
    }
    Var diff = sub(m, g.constant(std::move(identity)));
    Var loss = sum(mul(mul(diff, diff), g.constant(std::move(weights))));

    ContrastiveResult out;
    out.loss = loss;
    out.cross_correlation = m.value();
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double v = out.cross_correlation[i * d + j];
            if (i == j) {
                out.invariance += (1.0 - v) * (1.0 - v);
            } else {
                out.redundancy += v * v;
            }
        }
    }
    return out;
}

} // namespace selfaug
