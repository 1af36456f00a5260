#pragma once

#include "selfaug/data/batch.hpp"
#include "selfaug/metrics/metrics.hpp"
#include "selfaug/model/encoder.hpp"
#include "selfaug/random.hpp"
#include "selfaug/tensor/ops.hpp"
#include "selfaug/train/trainer.hpp"

#include "json.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace selfaug::testing {

// Plain single-model fine-tuning written out independently of Trainer: its own
// Adam loop, its own evaluation loop and its own stopping rule. Only the seed
// stream names are shared, so that data order, init and dropout line up.
struct ReferenceRun {
    std::vector<nlohmann::ordered_json> records; // EpochRecord::to_json(false) layout
    ParamStore final_params;                     // restored to the best epoch
};

inline ReferenceRun reference_baseline(const ModelConfig& cfg, const TrainConfig& tc, const EncodedDataset& train,
                                       const EncodedDataset& val) {
    auto model = EncoderModel::init(cfg, derive_seed(tc.seed, seed_streams::init_f));
    std::mt19937_64 dropout_rng(derive_seed(tc.seed, seed_streams::dropout_f));
    std::vector<std::vector<double>> m, v;
    for (const auto& p : model.params()) {
        m.emplace_back(p.value.size(), 0.0);
        v.emplace_back(p.value.size(), 0.0);
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::uint64_t t = 0;

    auto val_macro = [&] {
        std::vector<LabelSet> preds, gold;
        for (const auto& rows : batch_plan(val.size(), tc.batch_size, std::nullopt, BatchMode::eval)) {
            Graph g;
            const Batch b = collate(val, rows);
            const Tensor logits = model.forward(g, b, Mode::eval).logits.value();
            for (auto& p : predict(logits, cfg.head_kind, tc.threshold)) preds.push_back(p);
            for (auto r : rows) gold.push_back(val.items[r].targets);
        }
        return compute_metrics(preds, gold, val.labels).macro;
    };

    ReferenceRun out;
    double best = 0.0;
    std::size_t best_epoch = 0, since = 0;
    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (const auto& rows : batch_plan(train.size(), tc.batch_size, epoch_shuffle_seed(tc.seed, epoch),
                                           BatchMode::train)) {
            const Batch b = collate(train, rows);
            model.params().zero_grad();
            Graph g;
            Var loss = cross_entropy(model.forward(g, b, Mode::train, std::nullopt, &dropout_rng).logits,
                                     b.class_targets);
            loss_sum += loss.value().item();
            g.backward(loss);
            ++t;
            const double c1 = 1.0 - std::pow(b1, double(t)), c2 = 1.0 - std::pow(b2, double(t));
            for (std::size_t i = 0; i < model.params().size(); ++i) {
                Parameter& p = model.params()[i];
                for (std::size_t k = 0; k < p.value.size(); ++k) {
                    const double gk = p.grad.empty() ? 0.0 : p.grad[k];
                    m[i][k] = b1 * m[i][k] + (1.0 - b1) * gk;
                    v[i][k] = b2 * v[i][k] + (1.0 - b2) * gk * gk;
                    p.value[k] -= tc.learning_rate * (m[i][k] / c1) / (std::sqrt(v[i][k] / c2) + eps);
                }
            }
            ++steps;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        const double mean_loss = loss_sum / double(steps);
        rec.train_loss = {mean_loss, 0.0, 0.0, mean_loss};
        rec.val = val_macro();
        out.records.push_back(rec.to_json(false));
        if (best_epoch == 0 || rec.val.f1 > best) {
            best = rec.val.f1;
            best_epoch = epoch;
            since = 0;
            out.final_params = model.params();
        } else if (++since >= tc.patience) {
            break;
        }
    }
    return out;
}

} // namespace selfaug::testing
