#include "selfaug/train/trainer.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/random.hpp"
#include "selfaug/tensor/ops.hpp"
#include "selfaug/train/early_stopping.hpp"

#include <chrono>
#include <cmath>
#include <fmt/format.h>

namespace selfaug {

std::string_view to_string(TrainMode mode) {
    switch (mode) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::sa_only: return "sa_only";
    case TrainMode::proposed: return "proposed";
    }
    return "?";
}

TrainMode parse_train_mode(std::string_view text) {
    if (text == "baseline") return TrainMode::baseline;
    if (text == "sa_only") return TrainMode::sa_only;
    if (text == "proposed") return TrainMode::proposed;
    throw ConfigError(fmt::format("mode must be baseline, sa_only or proposed, got '{}'", text));
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError(fmt::format("learning_rate must be > 0, got {}", learning_rate));
    if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (patience > max_epochs) {
        throw ConfigError(fmt::format("patience {} exceeds max_epochs {}", patience, max_epochs));
    }
    if (batch_size < 2) throw ConfigError(fmt::format("batch_size must be at least 2, got {}", batch_size));
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError(fmt::format("adam_eps must be > 0, got {}", adam_eps));
}

nlohmann::json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate}, {"max_epochs", max_epochs}, {"patience", patience},
            {"batch_size", batch_size},       {"seed", seed},             {"mode", to_string(mode)},
            {"threshold", threshold},         {"adam_eps", adam_eps}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("train config must be an object");
    TrainConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "learning_rate") {
                c.learning_rate = value.get<double>();
            } else if (key == "max_epochs") {
                c.max_epochs = value.get<std::size_t>();
            } else if (key == "patience") {
                c.patience = value.get<std::size_t>();
            } else if (key == "batch_size") {
                c.batch_size = value.get<std::size_t>();
            } else if (key == "seed") {
                c.seed = value.get<std::uint64_t>();
            } else if (key == "mode") {
                c.mode = parse_train_mode(value.get<std::string>());
            } else if (key == "threshold") {
                c.threshold = value.get<double>();
            } else if (key == "adam_eps") {
                c.adam_eps = value.get<double>();
            } else {
                throw ConfigError(fmt::format("train: unknown key '{}'", key));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("train: {}", e.what()));
    }
    return c;
}

nlohmann::ordered_json EpochRecord::to_json(bool include_seconds) const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["train_ce_f"] = train_loss.ce_f;
    j["train_ce_c"] = train_loss.ce_c;
    j["train_contrastive"] = train_loss.contrastive;
    j["train_total"] = train_loss.total;
    j["val_precision"] = round6(val.precision);
    j["val_recall"] = round6(val.recall);
    j["val_f1"] = round6(val.f1);
    if (include_seconds) j["seconds"] = seconds;
    return j;
}

std::uint64_t epoch_shuffle_seed(std::uint64_t seed, std::size_t epoch) {
    return derive_seed(derive_seed(seed, seed_streams::shuffle), static_cast<std::uint64_t>(epoch));
}

namespace {

EncoderModel init_f(const ModelConfig& model, const TrainConfig& train) {
    model.validate();
    train.validate();
    return EncoderModel::init(model, derive_seed(train.seed, seed_streams::init_f));
}

AdamConfig adam_config(const TrainConfig& train) {
    AdamConfig a;
    a.learning_rate = train.learning_rate;
    a.eps = train.adam_eps;
    return a;
}

} // namespace

Trainer::Trainer(const ModelConfig& model, const DualStreamConfig& dual, const TrainConfig& train,
                 TrainerOptions options)
    : dual_(dual),
      train_(train),
      options_(std::move(options)),
      f_(init_f(model, train)),
      adam_f_(f_.params(), adam_config(train)),
      dropout_f_(derive_seed(train.seed, seed_streams::dropout_f)),
      dropout_c_(derive_seed(train.seed, seed_streams::dropout_c)) {
    if (train_.mode == TrainMode::baseline) return;
    dual_.validate(model.n_layers);
    if (!tied()) {
        c_.emplace(f_.config(), f_.params()); // C starts as an exact copy of F
        adam_c_.emplace(c_->params(), adam_config(train));
    }
    if (train_.mode == TrainMode::proposed) {
        proj_.emplace(ProjectionNetwork::init(model.d_model, dual_.projection_dims,
                                              derive_seed(train.seed, seed_streams::init_projection)));
        adam_proj_.emplace(proj_->params(), adam_config(train));
    }
}

void Trainer::zero_grads() {
    f_.params().zero_grad();
    if (c_) c_->params().zero_grad();
    if (proj_) proj_->params().zero_grad();
}

StepLosses Trainer::step(const Batch& batch) {
    zero_grads();
    Graph g;
    const TaskKind head = f_.config().head_kind;
    StepLosses losses;
    Var total;
    if (train_.mode == TrainMode::baseline) {
        auto out = f_.forward(g, batch, Mode::train, std::nullopt, &dropout_f_);
        total = classification_loss(out.logits, batch, head);
        losses.ce_f = total.value().item();
        losses.total = losses.ce_f;
    } else {
        DualForwardOptions opts{options_.zero_injection, &dropout_f_, &dropout_c_};
        auto out = dual_forward(g, f_, *model_c(), batch, dual_, Mode::train, opts);
        Var ce_f = classification_loss(out.f.logits, batch, head);
        Var ce_c = classification_loss(out.c.logits, batch, head);
        Var lc;
        double alpha = 0.0;
        if (train_.mode == TrainMode::proposed) {
            Var z_i = proj_->project(g, out.pooled_i, Mode::train);
            Var z_j = proj_->project(g, out.pooled_j, Mode::train);
            lc = contrastive_loss(z_i, z_j, dual_.lambda_offdiag).loss;
            alpha = dual_.alpha;
        } else {
            lc = g.constant(Tensor::scalar(0.0)); // not computed without the projection
        }
        total = composite_total(ce_f, ce_c, lc, alpha);
        losses = composite_loss(ce_f.value().item(), ce_c.value().item(), lc.value().item(), alpha);
    }
    if (!std::isfinite(total.value().item())) throw NumericDomainError("training loss became non-finite");
    g.backward(total);
    adam_f_.step(f_.params());
    if (c_) adam_c_->step(c_->params());
    if (proj_) adam_proj_->step(proj_->params());
    return losses;
}

Trainer::Snapshot Trainer::snapshot() const {
    Snapshot s;
    s.f = f_.params();
    if (c_) s.c = c_->params();
    if (proj_) {
        s.proj = proj_->params();
        s.proj_stats = proj_->stats();
    }
    s.adams.push_back(adam_f_);
    if (adam_c_) s.adams.push_back(*adam_c_);
    if (adam_proj_) s.adams.push_back(*adam_proj_);
    return s;
}

void Trainer::restore(const Snapshot& s) {
    f_ = EncoderModel(f_.config(), s.f);
    if (c_) c_ = EncoderModel(c_->config(), s.c);
    if (proj_) proj_ = ProjectionNetwork(proj_->input_dim(), proj_->dims(), s.proj, s.proj_stats);
    std::size_t k = 0;
    adam_f_ = s.adams[k++];
    if (adam_c_) adam_c_ = s.adams[k++];
    if (adam_proj_) adam_proj_ = s.adams[k++];
}

TrainResult Trainer::fit(const EncodedDataset& train_set, const EncodedDataset& val_set) {
    if (train_set.empty()) throw ValidationError("train split is empty");
    if (val_set.empty()) throw ValidationError("validation split is empty");
    if (train_set.size() < train_.batch_size) {
        throw ConfigError(fmt::format("train split has {} examples, fewer than batch_size {}", train_set.size(),
                                      train_.batch_size));
    }
    TrainResult result;
    EarlyStopping stopper(train_.patience);
    std::optional<Snapshot> best;
    for (std::size_t epoch = 1; epoch <= train_.max_epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        auto it = batches(train_set, train_.batch_size, epoch_shuffle_seed(train_.seed, epoch), BatchMode::train);
        StepLosses sum;
        std::size_t steps = 0;
        while (auto batch = it.next()) {
            const StepLosses s = step(*batch);
            if (options_.on_step) options_.on_step(StepInfo{epoch, steps, s});
            sum.ce_f += s.ce_f;
            sum.ce_c += s.ce_c;
            sum.contrastive += s.contrastive;
            sum.total += s.total;
            ++steps;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        const auto n = static_cast<double>(steps);
        rec.train_loss = {sum.ce_f / n, sum.ce_c / n, sum.contrastive / n, sum.total / n};
        rec.val = evaluate(f_, val_set, train_.batch_size, train_.threshold).macro;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.epochs.push_back(rec);
        if (options_.on_epoch) options_.on_epoch(rec);
        if (stopper.update(rec.val.f1)) best = snapshot();
        if (stopper.should_stop()) {
            result.stopped_early = epoch < train_.max_epochs;
            break;
        }
    }
    result.best_epoch = stopper.best_epoch();
    result.best_val_f1 = stopper.best_score();
    restore(*best);
    return result;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ck;
    ck.meta["kind"] = "dual_stream";
    ck.meta["model_config"] = f_.config().to_json();
    ck.meta["dual_config"] = dual_.to_json();
    ck.meta["train_config"] = train_.to_json();
    ck.add_params("model.", f_.params());
    auto add_adam = [&ck](const std::string& prefix, const Adam& adam, const ParamStore& params) {
        ck.meta["optimizer_steps"][prefix] = adam.steps();
        for (std::size_t i = 0; i < params.size(); ++i) {
            ck.arrays.push_back({"adam." + prefix + ".m." + params[i].name, adam.first_moments()[i]});
            ck.arrays.push_back({"adam." + prefix + ".v." + params[i].name, adam.second_moments()[i]});
        }
    };
    add_adam("f", adam_f_, f_.params());
    if (c_) {
        ck.add_params("model_c.", c_->params());
        add_adam("c", *adam_c_, c_->params());
    }
    if (proj_) {
        ck.add_params("projection.param.", proj_->params());
        ck.add_params("projection.stat.", proj_->stats());
        add_adam("projection", *adam_proj_, proj_->params());
    }
    return ck;
}

std::vector<LabelSet> predict_dataset(EncoderModel& model, const EncodedDataset& data, std::size_t batch_size,
                                      double threshold) {
    std::vector<LabelSet> preds;
    preds.reserve(data.size());
    auto it = batches(data, batch_size, std::nullopt, BatchMode::eval);
    while (auto batch = it.next()) {
        Graph g;
        auto out = model.forward(g, *batch, Mode::eval);
        for (auto& p : predict(out.logits.value(), model.config().head_kind, threshold)) preds.push_back(std::move(p));
    }
    return preds;
}

MetricsBundle evaluate(EncoderModel& model, const EncodedDataset& data, std::size_t batch_size, double threshold) {
    const auto preds = predict_dataset(model, data, batch_size, threshold);
    std::vector<LabelSet> gold;
    gold.reserve(data.size());
    for (const auto& item : data.items) gold.push_back(item.targets);
    return compute_metrics(preds, gold, data.labels);
}

} // namespace selfaug
