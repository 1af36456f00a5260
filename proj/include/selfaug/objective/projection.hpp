#pragma once

#include "selfaug/model/config.hpp"
#include "selfaug/tensor/graph.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace selfaug {

// Shared MLP mapping pooled hidden states into the space of the contrastive loss.
// Each affine layer is followed by per-feature batch normalization; all but the
// last also by ReLU:
//   in -> [Linear -> BN -> ReLU] x (n-1) -> Linear -> BN
// Train mode normalizes with batch statistics and updates running estimates
// (momentum 0.1, population variance); eval mode uses the running estimates.
class ProjectionNetwork {
public:
    static constexpr double kBatchNormEps = 1e-5;
    static constexpr double kMomentum = 0.1;

    static ProjectionNetwork init(std::size_t input_dim, std::vector<std::size_t> dims, std::uint64_t seed);
    // Adopt stored weights and running statistics (names as produced by init / stats()).
    ProjectionNetwork(std::size_t input_dim, std::vector<std::size_t> dims, ParamStore params, ParamStore stats);

    Var project(Graph& g, Var pooled, Mode mode);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return dims_.back(); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    // Running means and variances, stored as "bn{i}.mean" / "bn{i}.var".
    const ParamStore& stats() const { return stats_; }

private:
    ProjectionNetwork(std::size_t input_dim, std::vector<std::size_t> dims);
    void register_layout(std::mt19937_64* rng);

    std::size_t input_dim_;
    std::vector<std::size_t> dims_;
    ParamStore params_;
    ParamStore stats_;
};

} // namespace selfaug
