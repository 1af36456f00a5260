#pragma once

#include "selfaug/data/label_space.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace selfaug {

struct SplitResult {
    std::vector<Example> train;
    std::vector<Example> val;
    std::vector<Example> test;
    // False when some class was too small to stratify; the split fell back to a plain shuffle.
    bool stratified = true;
};

struct FoldResult {
    // Held-out folds; fold i's training data is the union of the others.
    std::vector<std::vector<Example>> folds;
    bool stratified = true;
};

// Train/val/test partition. Sizes are round(ratio * n) for train and val, the rest
// for test. Stratifies by first label when every class has at least as many
// members as there are non-empty parts.
SplitResult make_splits(const std::vector<Example>& examples, const std::array<double, 3>& ratios,
                        std::uint64_t seed);

// k-way partition into contiguous chunks of the class-spread order (stratified
// when every class has >= k members). Fold sizes differ by at most one.
FoldResult k_folds(const std::vector<Example>& examples, std::size_t k, std::uint64_t seed);

} // namespace selfaug
