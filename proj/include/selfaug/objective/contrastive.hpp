#pragma once

#include "selfaug/tensor/graph.hpp"

namespace selfaug {

// Column normalization epsilon. Small enough that unit-variance inputs normalize
// to within 1e-12 of the exact result.
inline constexpr double kContrastiveEps = 1e-12;
inline constexpr double kDefaultRedundancyWeight = 0.005;

struct ContrastiveResult {
    Var loss;
    Tensor cross_correlation; // [d, d]
    double invariance = 0.0;  // sum_i (1 - M_ii)^2
    double redundancy = 0.0;  // sum_{i != j} M_ij^2, unweighted
};

// Redundancy-reduction loss between two views z_a, z_b of shape [batch, d]:
// standardize each column over the batch, M = z_a^T z_b / batch, then
//   loss = sum_i (1 - M_ii)^2 + lambda * sum_{i != j} M_ij^2.
// Needs batch >= 2 and matching shapes.
ContrastiveResult contrastive_loss(Var z_a, Var z_b, double lambda, double eps = kContrastiveEps);

} // namespace selfaug
