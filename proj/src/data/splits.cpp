#include "selfaug/data/splits.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/random.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numeric>

namespace selfaug {
namespace {

// Shuffled order of example indices. When stratifying, each example gets the key
// (rank within its class + 0.5) / class size and the order is sorted by that key,
// so every contiguous segment holds each class in roughly its global proportion.
std::vector<std::size_t> spread_order(const std::vector<Example>& examples, std::size_t min_per_class,
                                      std::uint64_t seed, bool& stratified) {
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    deterministic_shuffle(order, seed);

    std::map<std::string, std::size_t> class_size;
    for (const auto& ex : examples) ++class_size[ex.labels.empty() ? std::string() : ex.labels.front()];
    stratified = std::all_of(class_size.begin(), class_size.end(),
                             [&](const auto& kv) { return kv.second >= min_per_class; });
    if (!stratified) return order;

    std::map<std::string, std::size_t> class_id;
    for (const auto& [label, n] : class_size) class_id.emplace(label, class_id.size());
    std::map<std::string, std::size_t> seen;
    struct Keyed {
        double key;
        std::size_t cls;
        std::size_t index;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(order.size());
    for (std::size_t idx : order) {
        const std::string& label = examples[idx].labels.empty() ? std::string() : examples[idx].labels.front();
        const std::size_t rank = seen[label]++;
        keyed.push_back({(static_cast<double>(rank) + 0.5) / static_cast<double>(class_size[label]),
                         class_id[label], idx});
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.key != b.key) return a.key < b.key;
        return a.cls < b.cls;
    });
    for (std::size_t i = 0; i < keyed.size(); ++i) order[i] = keyed[i].index;
    return order;
}

} // namespace

SplitResult make_splits(const std::vector<Example>& examples, const std::array<double, 3>& ratios,
                        std::uint64_t seed) {
    if (examples.empty()) throw ConfigError("make_splits: no examples");
    double total = 0.0;
    std::size_t parts = 0;
    for (double r : ratios) {
        if (r < 0.0) throw ConfigError("make_splits: negative ratio");
        total += r;
        parts += r > 0.0 ? 1 : 0;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError(fmt::format("make_splits: ratios sum to {}, not 1", total));

    SplitResult out;
    const auto order = spread_order(examples, parts, seed, out.stratified);
    const std::size_t n = examples.size();
    const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(ratios[0] * n)));
    const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(ratios[1] * n)));
    for (std::size_t i = 0; i < n; ++i) {
        const Example& ex = examples[order[i]];
        if (i < n_train) {
            out.train.push_back(ex);
        } else if (i < n_train + n_val) {
            out.val.push_back(ex);
        } else {
            out.test.push_back(ex);
        }
    }
    return out;
}

FoldResult k_folds(const std::vector<Example>& examples, std::size_t k, std::uint64_t seed) {
    if (examples.empty()) throw ConfigError("k_folds: no examples");
    if (k < 2) throw ConfigError(fmt::format("k_folds: k must be >= 2, got {}", k));
    if (k > examples.size()) throw ConfigError(fmt::format("k_folds: {} folds for {} examples", k, examples.size()));
    FoldResult out;
    const auto order = spread_order(examples, k, seed, out.stratified);
    out.folds.resize(k);
    // Contiguous chunks; a stride (i % k) would alias with the class interleaving.
    const std::size_t n = order.size();
    for (std::size_t i = 0; i < n; ++i) out.folds[i * k / n].push_back(examples[order[i]]);
    return out;
}

} // namespace selfaug
