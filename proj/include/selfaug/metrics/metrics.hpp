#pragma once

#include "selfaug/data/label_space.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace selfaug {

using LabelSet = std::vector<int>;

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

// One-vs-rest decisions per class: for every example and class, "predicted" is
// class in prediction and "gold" is class in target. For single-label tasks this
// is the usual one-vs-rest reading of a confusion matrix; for multilabel tasks it
// is one decision per (example, label) pair.
struct ConfusionCounts {
    std::vector<ClassCounts> per_class;
    std::size_t n_examples = 0;
    std::size_t exact_matches = 0; // predicted set == gold set
};

ConfusionCounts confusion(std::span<const LabelSet> preds, std::span<const LabelSet> targets,
                          const LabelSpace& labels);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

enum class Averaging { macro, micro, per_class };

struct PrfResult {
    std::vector<Prf> per_class; // filled for per_class only
    Prf summary;                // macro or micro
    std::size_t zero_division_classes = 0;
};

// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); 0/0 yields zero_division_value.
// Macro: unweighted mean of per-class P, R and F1. Micro: the same formulas on pooled counts.
PrfResult prf(const ConfusionCounts& counts, Averaging averaging, double zero_division_value = 0.0);

struct MetricsBundle {
    std::vector<std::string> labels;
    std::vector<Prf> per_class;
    std::vector<std::size_t> support; // gold occurrences per class
    Prf macro;
    Prf micro;
    double accuracy = 0.0; // exact-match ratio (subset accuracy for multilabel)
    std::size_t n_examples = 0;
    std::size_t zero_division_classes = 0;
};

MetricsBundle compute_metrics(std::span<const LabelSet> preds, std::span<const LabelSet> targets,
                              const LabelSpace& labels);

// Stable schema; every real number is rounded to 6 decimals:
// {"n_examples", "accuracy", "macro": {"precision","recall","f1"}, "micro": {...},
//  "per_class": [{"label","precision","recall","f1","support"}...], "zero_division_classes"}
nlohmann::ordered_json to_json(const MetricsBundle& m);

double round6(double value);

} // namespace selfaug
