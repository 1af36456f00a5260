#include "selfaug/metrics/metrics.hpp"

#include "selfaug/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace selfaug {
namespace {

bool contains(const LabelSet& set, int label) { return std::find(set.begin(), set.end(), label) != set.end(); }

bool same_set(LabelSet a, LabelSet b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return a == b;
}

double ratio(std::size_t num, std::size_t den, double zero_division, bool& hit) {
    if (den == 0) {
        hit = true;
        return zero_division;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

Prf from_counts(std::size_t tp, std::size_t fp, std::size_t fn, double zero_division, bool& hit) {
    Prf r;
    r.precision = ratio(tp, tp + fp, zero_division, hit);
    r.recall = ratio(tp, tp + fn, zero_division, hit);
    // 2PR/(P+R) written on counts, so micro-F1 and accuracy round identically.
    r.f1 = ratio(2 * tp, 2 * tp + fp + fn, zero_division, hit);
    return r;
}

nlohmann::ordered_json prf_json(const Prf& p) {
    nlohmann::ordered_json j;
    j["precision"] = round6(p.precision);
    j["recall"] = round6(p.recall);
    j["f1"] = round6(p.f1);
    return j;
}

} // namespace

double round6(double value) { return std::round(value * 1e6) / 1e6; }

ConfusionCounts confusion(std::span<const LabelSet> preds, std::span<const LabelSet> targets,
                          const LabelSpace& labels) {
    if (preds.size() != targets.size()) {
        throw DimensionError(fmt::format("confusion: {} predictions for {} targets", preds.size(), targets.size()));
    }
    const int n_classes = static_cast<int>(labels.size());
    ConfusionCounts out;
    out.per_class.resize(labels.size());
    out.n_examples = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (const auto* set : {&preds[i], &targets[i]}) {
            for (int l : *set) {
                if (l < 0 || l >= n_classes) throw ValidationError(fmt::format("confusion: label index {} invalid", l));
            }
        }
        if (same_set(preds[i], targets[i])) ++out.exact_matches;
        for (int c = 0; c < n_classes; ++c) {
            const bool p = contains(preds[i], c);
            const bool g = contains(targets[i], c);
            auto& k = out.per_class[static_cast<std::size_t>(c)];
            if (p && g) {
                ++k.tp;
            } else if (p) {
                ++k.fp;
            } else if (g) {
                ++k.fn;
            } else {
                ++k.tn;
            }
        }
    }
    return out;
}

PrfResult prf(const ConfusionCounts& counts, Averaging averaging, double zero_division_value) {
    PrfResult out;
    if (averaging == Averaging::micro) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (const auto& k : counts.per_class) {
            tp += k.tp;
            fp += k.fp;
            fn += k.fn;
        }
        bool hit = false;
        out.summary = from_counts(tp, fp, fn, zero_division_value, hit);
        return out;
    }
    for (const auto& k : counts.per_class) {
        bool hit = false;
        out.per_class.push_back(from_counts(k.tp, k.fp, k.fn, zero_division_value, hit));
        out.zero_division_classes += hit ? 1 : 0;
    }
    if (!out.per_class.empty()) {
        for (const auto& p : out.per_class) {
            out.summary.precision += p.precision;
            out.summary.recall += p.recall;
            out.summary.f1 += p.f1;
        }
        const auto n = static_cast<double>(out.per_class.size());
        out.summary.precision /= n;
        out.summary.recall /= n;
        out.summary.f1 /= n;
    }
    if (averaging == Averaging::macro) out.per_class.clear();
    return out;
}

MetricsBundle compute_metrics(std::span<const LabelSet> preds, std::span<const LabelSet> targets,
                              const LabelSpace& labels) {
    const auto counts = confusion(preds, targets, labels);
    const auto per_class = prf(counts, Averaging::per_class);
    MetricsBundle m;
    m.labels = labels.labels();
    m.per_class = per_class.per_class;
    m.macro = per_class.summary;
    m.micro = prf(counts, Averaging::micro).summary;
    m.zero_division_classes = per_class.zero_division_classes;
    m.n_examples = counts.n_examples;
    m.accuracy = counts.n_examples == 0
                     ? 0.0
                     : static_cast<double>(counts.exact_matches) / static_cast<double>(counts.n_examples);
    for (const auto& k : counts.per_class) m.support.push_back(k.tp + k.fn);
    return m;
}

nlohmann::ordered_json to_json(const MetricsBundle& m) {
    nlohmann::ordered_json j;
    j["n_examples"] = m.n_examples;
    j["accuracy"] = round6(m.accuracy);
    j["macro"] = prf_json(m.macro);
    j["micro"] = prf_json(m.micro);
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        nlohmann::ordered_json row;
        row["label"] = m.labels.at(c);
        row["precision"] = round6(m.per_class[c].precision);
        row["recall"] = round6(m.per_class[c].recall);
        row["f1"] = round6(m.per_class[c].f1);
        row["support"] = m.support.at(c);
        classes.push_back(std::move(row));
    }
    j["per_class"] = std::move(classes);
    j["zero_division_classes"] = m.zero_division_classes;
    return j;
}

} // namespace selfaug
