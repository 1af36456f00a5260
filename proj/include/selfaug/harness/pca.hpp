#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace selfaug {

struct PcaResult {
    std::vector<double> mean;                    // [d]
    std::vector<std::vector<double>> components; // unit vectors, [k][d]
    std::vector<double> variances;               // eigenvalues of the covariance, descending
    std::vector<std::vector<double>> scores;     // centered rows projected, [n][k]
};

// Top-k principal components of the rows by power iteration with deflation on the
// sample covariance. Deterministic given `seed`.
PcaResult pca(const std::vector<std::vector<double>>& rows, std::size_t k, std::uint64_t seed = 0,
              std::size_t max_iters = 2000, double tol = 1e-12);

} // namespace selfaug
