#pragma once

#include "selfaug/tensor/graph.hpp"

#include <cstdint>
#include <vector>

namespace selfaug {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over one ParamStore:
//   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
//   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class Adam {
public:
    Adam(const ParamStore& params, AdamConfig config);

    // Applies one update from the accumulated grads (missing grads count as zero).
    // A non-finite gradient aborts before anything changes, naming the parameter.
    void step(ParamStore& params);

    const AdamConfig& config() const { return config_; }
    std::uint64_t steps() const { return t_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    AdamConfig config_;
    std::uint64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

} // namespace selfaug
