#include "selfaug/train/adam.hpp"

#include "selfaug/errors.hpp"

#include <cmath>
#include <fmt/format.h>

namespace selfaug {

Adam::Adam(const ParamStore& params, AdamConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) {
        throw ConfigError(fmt::format("learning rate must be > 0, got {}", config_.learning_rate));
    }
    for (const auto& p : params) {
        m_.push_back(Tensor::zeros_like(p.value));
        v_.push_back(Tensor::zeros_like(p.value));
    }
}

void Adam::step(ParamStore& params) {
    if (params.size() != m_.size()) {
        throw DimensionError(fmt::format("adam: state for {} parameters, got {}", m_.size(), params.size()));
    }
    for (const auto& p : params) {
        if (!p.grad.empty() && p.grad.shape() != p.value.shape()) {
            throw DimensionError(fmt::format("adam: gradient shape of '{}' is {}, parameter is {}", p.name,
                                             to_string(p.grad.shape()), to_string(p.value.shape())));
        }
        if (!p.grad.all_finite()) throw NumericDomainError(fmt::format("non-finite gradient in parameter '{}'", p.name));
    }
    ++t_;
    const auto& c = config_;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        auto& m = m_[i].values();
        auto& v = v_[i].values();
        auto& w = p.value.values();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double g = p.grad.empty() ? 0.0 : p.grad[k];
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
            w[k] -= c.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
        }
    }
}

void Adam::restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw DimensionError("adam: restored state size mismatch");
    for (std::size_t i = 0; i < m_.size(); ++i) {
        if (m[i].shape() != m_[i].shape() || v[i].shape() != v_[i].shape()) {
            throw DimensionError("adam: restored moment shape mismatch");
        }
    }
    t_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

} // namespace selfaug
