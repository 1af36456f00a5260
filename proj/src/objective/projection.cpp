#include "selfaug/objective/projection.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/tensor/ops.hpp"

#include <cmath>
#include <fmt/format.h>
#include <random>

namespace selfaug {

ProjectionNetwork::ProjectionNetwork(std::size_t input_dim, std::vector<std::size_t> dims)
    : input_dim_(input_dim), dims_(std::move(dims)) {
    if (input_dim_ == 0) throw ConfigError("projection input width must be positive");
    if (dims_.empty()) throw ConfigError("projection needs at least one layer");
    for (auto d : dims_) {
        if (d == 0) throw ConfigError("projection layer widths must be positive");
    }
}

ProjectionNetwork ProjectionNetwork::init(std::size_t input_dim, std::vector<std::size_t> dims, std::uint64_t seed) {
    ProjectionNetwork net(input_dim, std::move(dims));
    std::mt19937_64 rng(seed);
    net.register_layout(&rng);
    return net;
}

ProjectionNetwork::ProjectionNetwork(std::size_t input_dim, std::vector<std::size_t> dims, ParamStore params,
                                     ParamStore stats)
    : ProjectionNetwork(input_dim, std::move(dims)) {
    register_layout(nullptr);
    auto adopt = [](ParamStore& into, ParamStore& from, const char* what) {
        if (from.size() != into.size()) {
            throw ConfigError(fmt::format("projection {}: expected {} arrays, got {}", what, into.size(), from.size()));
        }
        for (std::size_t i = 0; i < into.size(); ++i) {
            if (from[i].name != into[i].name || from[i].value.shape() != into[i].value.shape()) {
                throw ConfigError(fmt::format("projection {}: unexpected array '{}'", what, from[i].name));
            }
            into[i].value = std::move(from[i].value);
        }
    };
    adopt(params_, params, "parameters");
    adopt(stats_, stats, "statistics");
}

void ProjectionNetwork::register_layout(std::mt19937_64* rng) {
    std::size_t fan_in = input_dim_;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        Tensor w({fan_in, dims_[i]});
        if (rng != nullptr) {
            std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
            for (double& v : w.values()) v = dist(*rng);
        }
        params_.add(fmt::format("linear{}.w", i), std::move(w));
        params_.add(fmt::format("linear{}.b", i), Tensor({dims_[i]}));
        stats_.add(fmt::format("bn{}.mean", i), Tensor({dims_[i]}));
        stats_.add(fmt::format("bn{}.var", i), Tensor({dims_[i]}, 1.0));
        fan_in = dims_[i];
    }
}

Var ProjectionNetwork::project(Graph& g, Var pooled, Mode mode) {
    if (pooled.value().rank() != 2 || pooled.shape()[1] != input_dim_) {
        throw DimensionError(
            fmt::format("projection expects [batch, {}], got {}", input_dim_, to_string(pooled.shape())));
    }
    const std::size_t batch = pooled.shape()[0];
    if (mode == Mode::train && batch < 2) {
        throw ConfigError("projection in train mode needs a batch of at least 2");
    }
    Var x = pooled;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        x = add_bcast(matmul(x, g.param(params_[2 * i])), g.param(params_[2 * i + 1]));
        Tensor& run_mean = stats_[2 * i].value;
        Tensor& run_var = stats_[2 * i + 1].value;
        if (mode == Mode::train) {
            const Tensor& v = x.value();
            const std::size_t d = dims_[i];
            for (std::size_t j = 0; j < d; ++j) {
                double mu = 0.0;
                for (std::size_t b = 0; b < batch; ++b) mu += v[b * d + j];
                mu /= static_cast<double>(batch);
                double var = 0.0;
                for (std::size_t b = 0; b < batch; ++b) var += (v[b * d + j] - mu) * (v[b * d + j] - mu);
                var /= static_cast<double>(batch);
                run_mean[j] = (1.0 - kMomentum) * run_mean[j] + kMomentum * mu;
                run_var[j] = (1.0 - kMomentum) * run_var[j] + kMomentum * var;
            }
            x = batch_norm_features(x, kBatchNormEps);
        } else {
            Tensor shift = run_mean;
            Tensor inv_std = run_var;
            for (double& m : shift.values()) m = -m;
            for (double& s : inv_std.values()) s = 1.0 / std::sqrt(s + kBatchNormEps);
            x = mul_bcast(add_bcast(x, g.constant(std::move(shift))), g.constant(std::move(inv_std)));
        }
        if (i + 1 < dims_.size()) x = relu(x);
    }
    return x;
}

} // namespace selfaug
