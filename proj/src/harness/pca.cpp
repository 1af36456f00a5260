#include "selfaug/harness/pca.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/random.hpp"

#include <cmath>
#include <fmt/format.h>

namespace selfaug {
namespace {

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

PcaResult pca(const std::vector<std::vector<double>>& rows, std::size_t k, std::uint64_t seed, std::size_t max_iters,
              double tol) {
    if (rows.size() < 2) throw ValidationError("PCA needs at least two rows");
    const std::size_t n = rows.size();
    const std::size_t d = rows.front().size();
    if (k == 0 || k > d) throw ConfigError(fmt::format("PCA components {} outside [1, {}]", k, d));
    for (const auto& r : rows) {
        if (r.size() != d) throw DimensionError("PCA rows differ in width");
    }

    PcaResult out;
    out.mean.assign(d, 0.0);
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < d; ++j) out.mean[j] += r[j];
    }
    for (double& m : out.mean) m /= static_cast<double>(n);

    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) centered[i][j] = rows[i][j] - out.mean[j];
    }
    std::vector<double> cov(d * d, 0.0);
    for (const auto& r : centered) {
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += r[a] * r[b];
        }
    }
    for (double& c : cov) c /= static_cast<double>(n - 1);

    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> v(d);
        for (double& x : v) x = uniform01(rng) - 0.5;
        double lambda = 0.0;
        for (std::size_t it = 0; it < max_iters; ++it) {
            // Orthogonalize against found components so round-off cannot pull v back.
            for (const auto& u : out.components) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += u[j] * v[j];
                for (std::size_t j = 0; j < d; ++j) v[j] -= dot * u[j];
            }
            const double nv = norm(v);
            if (nv == 0.0) break;
            for (double& x : v) x /= nv;
            std::vector<double> w(d, 0.0);
            for (std::size_t a = 0; a < d; ++a) {
                for (std::size_t b = 0; b < d; ++b) w[a] += cov[a * d + b] * v[b];
            }
            double next = 0.0;
            for (std::size_t j = 0; j < d; ++j) next += v[j] * w[j];
            const bool converged = std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next));
            lambda = next;
            if (converged && it > 0) break;
            v = std::move(w);
        }
        const double nv = norm(v);
        if (nv > 0.0) {
            for (double& x : v) x /= nv;
        }
        // Deflate: cov -= lambda v v^T.
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] -= lambda * v[a] * v[b];
        }
        out.components.push_back(std::move(v));
        out.variances.push_back(std::max(lambda, 0.0));
    }

    out.scores.assign(n, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += centered[i][j] * out.components[c][j];
            out.scores[i][c] = s;
        }
    }
    return out;
}

} // namespace selfaug
