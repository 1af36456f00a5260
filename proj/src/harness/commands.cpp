#include "selfaug/harness/commands.hpp"

#include "selfaug/data/jsonl.hpp"
#include "selfaug/errors.hpp"
#include "selfaug/harness/pca.hpp"
#include "selfaug/random.hpp"
#include "selfaug/tensor/ops.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <fstream>
#include <mutex>
#include <thread>

namespace selfaug {
namespace fs = std::filesystem;
namespace {

std::mutex log_mutex;

template <typename... Args>
void note(fmt::format_string<Args...> f, Args&&... args) {
    std::lock_guard lock(log_mutex);
    fmt::print(stderr, "{}\n", fmt::format(f, std::forward<Args>(args)...));
}

std::string num(double v) { return fmt::format("{:.6f}", round6(v)); }

std::string join_labels(const LabelSet& set, const LabelSpace& labels) {
    std::string out;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (i) out += '|';
        out += labels.label(static_cast<std::size_t>(set[i]));
    }
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

nlohmann::ordered_json prf_row(const Prf& p) {
    nlohmann::ordered_json j;
    j["precision"] = round6(p.precision);
    j["recall"] = round6(p.recall);
    j["f1"] = round6(p.f1);
    return j;
}

void write_run(const fs::path& dir, const ExperimentConfig& cfg, const TrainOutcome& o) {
    fs::create_directories(dir);
    write_text(dir / "metrics.json", dump_json(metrics_json(cfg, o)));
    write_text(dir / "epochs.jsonl", epochs_jsonl(o.result.epochs));
}

} // namespace

StagedDir::StagedDir(fs::path target, bool overwrite) : target_(std::move(target)) {
    if (target_.empty()) throw ConfigError("an output directory is required (--out)");
    target_ = fs::absolute(target_).lexically_normal();
    if (!target_.has_filename()) target_ = target_.parent_path();
    if (fs::exists(target_) && !(fs::is_directory(target_) && fs::is_empty(target_)) && !overwrite) {
        throw ConfigError(fmt::format("output {} already exists; pass --overwrite to replace it", target_.string()));
    }
    staging_ = target_.parent_path() / ("." + target_.filename().string() + ".partial");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
}

StagedDir::~StagedDir() {
    if (!committed_) {
        std::error_code ec;
        fs::remove_all(staging_, ec);
    }
}

void StagedDir::commit() {
    fs::remove_all(target_);
    fs::rename(staging_, target_);
    committed_ = true;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), n);
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << text;
    if (!out) throw std::runtime_error(fmt::format("write failed for {}", path.string()));
}

std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

std::string epochs_jsonl(const std::vector<EpochRecord>& epochs) {
    std::string out;
    for (const auto& e : epochs) out += e.to_json().dump() + "\n";
    return out;
}

TrainOutcome train_once(const ExperimentConfig& cfg, const PreparedData& data) {
    Trainer trainer(data.model, cfg.dual, cfg.train);
    TrainOutcome o;
    o.result = trainer.fit(data.train, data.val);
    o.val = evaluate(trainer.model_f(), data.val, cfg.train.batch_size, cfg.train.threshold);
    o.test = evaluate(trainer.model_f(), data.test, cfg.train.batch_size, cfg.train.threshold);
    o.checkpoint = trainer.checkpoint();
    o.checkpoint.meta["vocab"] = data.vocab.tokens();
    o.checkpoint.meta["label_space"] = data.labels.to_json();
    o.checkpoint.meta["best_epoch"] = o.result.best_epoch;
    return o;
}

nlohmann::ordered_json metrics_json(const ExperimentConfig& cfg, const TrainOutcome& o) {
    nlohmann::ordered_json j;
    j["mode"] = to_string(cfg.train.mode);
    j["epochs_run"] = o.result.epochs.size();
    j["best_epoch"] = o.result.best_epoch;
    j["stopped_early"] = o.result.stopped_early;
    j["best_val_f1"] = round6(o.result.best_val_f1);
    j["validation"] = to_json(o.val);
    j["test"] = to_json(o.test);
    return j;
}

TrainOutcome run_train(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const PreparedData data = prepare_data(cfg);
    StagedDir dir(opts.out, opts.overwrite);
    note("train: mode={} train={} val={} test={} vocab={}", to_string(cfg.train.mode), data.train.size(),
         data.val.size(), data.test.size(), data.vocab.size());
    TrainOutcome o = train_once(cfg, data);
    o.checkpoint.save(dir.path() / "checkpoint.bin");
    write_run(dir.path(), cfg, o);
    write_text(dir.path() / "config.json", dump_json(cfg.to_json()));
    dir.commit();
    note("train: best epoch {} val macro-F1 {} test macro-F1 {}", o.result.best_epoch, num(o.result.best_val_f1),
         num(o.test.macro.f1));
    return o;
}

std::string grid_csv(const GridReport& report) {
    std::string out = "cell,batch_size,alpha,L_i,L_j,status,best_val_f1,best_epoch,test_precision,test_recall,"
                      "test_f1,winner\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        out += fmt::format("{},{},{},{},{},{},", i + 1, r.cell.batch_size, r.cell.alpha, r.cell.tap_layer,
                           r.cell.inject_layer, r.ok ? "ok" : "failed");
        if (r.ok) {
            out += fmt::format("{},{},{},{},{},", num(r.best_val_f1), r.best_epoch, num(r.test.precision),
                               num(r.test.recall), num(r.test.f1));
        } else {
            out += ",,,,,";
        }
        out += report.winner == i ? "1\n" : "0\n";
    }
    return out;
}

GridReport run_grid(const ExperimentConfig& cfg, const RunOptions& opts) {
    if (!cfg.grid) throw ConfigError("grid: config has no 'grid' section");
    cfg.validate();
    const auto cells = enumerate_grid(cfg);
    const PreparedData data = prepare_data(cfg); // one split shared by every cell
    StagedDir dir(opts.out, opts.overwrite);
    note("grid: {} cells, {} workers", cells.size(), opts.workers);

    GridReport report;
    report.rows.resize(cells.size());
    parallel_for(cells.size(), opts.workers, [&](std::size_t i) {
        GridRow& row = report.rows[i];
        row.cell = cells[i];
        try {
            const ExperimentConfig cell_cfg = apply_cell(cfg, cells[i]);
            cell_cfg.validate();
            const TrainOutcome o = train_once(cell_cfg, data);
            write_run(dir.path() / "cells" / fmt::format("cell-{:04d}", i + 1), cell_cfg, o);
            row.ok = true;
            row.best_epoch = o.result.best_epoch;
            row.best_val_f1 = o.result.best_val_f1;
            row.test = o.test.macro;
            note("grid: cell {} (b={} alpha={} L_i={} L_j={}) val F1 {}", i + 1, row.cell.batch_size,
                 row.cell.alpha, row.cell.tap_layer, row.cell.inject_layer, num(row.best_val_f1));
        } catch (const std::exception& e) {
            row.error = e.what();
            note("grid: cell {} failed: {}", i + 1, e.what());
        }
    });
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        if (!r.ok) {
            ++report.failures;
        } else if (!report.winner || r.best_val_f1 > report.rows[*report.winner].best_val_f1) {
            report.winner = i;
        }
    }

    nlohmann::ordered_json j;
    j["order"] = "lexicographic over (batch_size, alpha, L_i, L_j)";
    j["cells"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        nlohmann::ordered_json c;
        c["cell"] = i + 1;
        c["batch_size"] = r.cell.batch_size;
        c["alpha"] = r.cell.alpha;
        c["L_i"] = r.cell.tap_layer;
        c["L_j"] = r.cell.inject_layer;
        c["status"] = r.ok ? "ok" : "failed";
        if (r.ok) {
            c["best_val_f1"] = round6(r.best_val_f1);
            c["best_epoch"] = r.best_epoch;
            c["test"] = prf_row(r.test);
        } else {
            c["error"] = r.error;
        }
        j["cells"].push_back(std::move(c));
    }
    j["winner"] = report.winner ? nlohmann::ordered_json(*report.winner + 1) : nlohmann::ordered_json(nullptr);
    j["failures"] = report.failures;
    write_text(dir.path() / "grid.csv", grid_csv(report));
    write_text(dir.path() / "grid.json", dump_json(j));
    write_text(dir.path() / "config.json", dump_json(cfg.to_json()));
    dir.commit();
    if (report.failures == report.rows.size()) throw std::runtime_error("grid: every cell failed");
    return report;
}

KFoldReport run_kfold(const ExperimentConfig& cfg, std::size_t k, const RunOptions& opts) {
    if (k < 2) throw ConfigError(fmt::format("k must be at least 2, got {}", k));
    cfg.validate();
    const FoldResult folds = k_folds(load_all_examples(cfg), k, derive_seed(cfg.seed, "kfold"));
    for (const auto& f : folds.folds) {
        if (f.empty()) throw ConfigError(fmt::format("k={} leaves an empty fold", k));
    }
    KFoldReport report;
    report.stratified = folds.stratified;
    if (!folds.stratified) note("kfold: some class has fewer than {} examples; folds are not stratified", k);
    std::vector<PreparedData> prepared;
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<Example> rest;
        for (std::size_t f = 0; f < k; ++f) {
            if (f != i) rest.insert(rest.end(), folds.folds[f].begin(), folds.folds[f].end());
        }
        SplitResult split = make_splits(rest, {0.8, 0.2, 0.0}, derive_seed(derive_seed(cfg.seed, "kfold.val"), i));
        split.test = folds.folds[i];
        prepared.push_back(prepare_splits(cfg, std::move(split)));
    }
    StagedDir dir(opts.out, opts.overwrite);
    report.folds.resize(k);
    parallel_for(k, opts.workers, [&](std::size_t i) {
        const TrainOutcome o = train_once(cfg, prepared[i]);
        write_run(dir.path() / "folds" / fmt::format("fold-{:02d}", i + 1), cfg, o);
        FoldRow& row = report.folds[i];
        row = {i + 1, prepared[i].train.size(), prepared[i].val.size(), prepared[i].test.size(),
               o.result.best_epoch, o.test.macro};
        note("kfold: fold {} test macro-F1 {}", i + 1, num(row.test.f1));
    });
    const auto n = static_cast<double>(k);
    for (const auto& r : report.folds) {
        report.mean.precision += r.test.precision;
        report.mean.recall += r.test.recall;
        report.mean.f1 += r.test.f1;
    }
    report.mean.precision /= n;
    report.mean.recall /= n;
    report.mean.f1 /= n;
    for (const auto& r : report.folds) {
        report.std.precision += (r.test.precision - report.mean.precision) * (r.test.precision - report.mean.precision);
        report.std.recall += (r.test.recall - report.mean.recall) * (r.test.recall - report.mean.recall);
        report.std.f1 += (r.test.f1 - report.mean.f1) * (r.test.f1 - report.mean.f1);
    }
    report.std.precision = std::sqrt(report.std.precision / (n - 1.0));
    report.std.recall = std::sqrt(report.std.recall / (n - 1.0));
    report.std.f1 = std::sqrt(report.std.f1 / (n - 1.0));

    std::string csv = "fold,n_train,n_val,n_test,best_epoch,precision,recall,f1\n";
    nlohmann::ordered_json j;
    j["k"] = k;
    j["stratified"] = report.stratified;
    j["folds"] = nlohmann::ordered_json::array();
    for (const auto& r : report.folds) {
        csv += fmt::format("{},{},{},{},{},{},{},{}\n", r.fold, r.n_train, r.n_val, r.n_test, r.best_epoch,
                           num(r.test.precision), num(r.test.recall), num(r.test.f1));
        nlohmann::ordered_json f = prf_row(r.test);
        f["fold"] = r.fold;
        f["n_train"] = r.n_train;
        f["n_val"] = r.n_val;
        f["n_test"] = r.n_test;
        f["best_epoch"] = r.best_epoch;
        j["folds"].push_back(std::move(f));
    }
    csv += fmt::format("mean,,,,,{},{},{}\n", num(report.mean.precision), num(report.mean.recall), num(report.mean.f1));
    csv += fmt::format("std,,,,,{},{},{}\n", num(report.std.precision), num(report.std.recall), num(report.std.f1));
    j["mean"] = prf_row(report.mean);
    j["std"] = prf_row(report.std);
    j["std_convention"] = "sample (n - 1)";
    write_text(dir.path() / "kfold.csv", csv);
    write_text(dir.path() / "kfold.json", dump_json(j));
    write_text(dir.path() / "config.json", dump_json(cfg.to_json()));
    dir.commit();
    return report;
}

std::vector<AblationRow> run_ablate(const ExperimentConfig& cfg, const RunOptions& opts) {
    std::vector<AblationRow> rows{{"Baseline", TrainMode::baseline, 0.0, {}},
                                  {"+SA", TrainMode::sa_only, 0.0, {}},
                                  {"+Proposed", TrainMode::proposed, 0.0, {}}};
    std::vector<ExperimentConfig> cfgs;
    for (const auto& r : rows) {
        ExperimentConfig c = cfg;
        c.train.mode = r.mode;
        c.validate();
        cfgs.push_back(std::move(c));
    }
    const PreparedData data = prepare_data(cfg);
    StagedDir dir(opts.out, opts.overwrite);
    parallel_for(rows.size(), opts.workers, [&](std::size_t i) {
        const TrainOutcome o = train_once(cfgs[i], data);
        write_run(dir.path() / "runs" / std::string(to_string(rows[i].mode)), cfgs[i], o);
        rows[i].best_val_f1 = o.result.best_val_f1;
        rows[i].test = o.test.macro;
        note("ablate: {} test macro-F1 {}", rows[i].name, num(rows[i].test.f1));
    });
    std::string csv = "row,mode,best_val_f1,precision,recall,f1\n";
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        csv += fmt::format("{},{},{},{},{},{}\n", r.name, to_string(r.mode), num(r.best_val_f1),
                           num(r.test.precision), num(r.test.recall), num(r.test.f1));
        nlohmann::ordered_json row;
        row["row"] = r.name;
        row["mode"] = to_string(r.mode);
        row["best_val_f1"] = round6(r.best_val_f1);
        row["test"] = prf_row(r.test);
        j.push_back(std::move(row));
    }
    write_text(dir.path() / "ablation.csv", csv);
    write_text(dir.path() / "ablation.json", dump_json(j));
    write_text(dir.path() / "config.json", dump_json(cfg.to_json()));
    dir.commit();
    return rows;
}

EmbeddingLayer parse_embedding_layer(std::string_view text) {
    if (text == "pooled_final") return EmbeddingLayer::pooled_final;
    if (text == "tapped") return EmbeddingLayer::tapped;
    throw ConfigError(fmt::format("layer must be pooled_final or tapped, got '{}'", text));
}

std::size_t run_export_embeddings(const ExportOptions& eo, const RunOptions& opts) {
    if (eo.data.has_value() == eo.config.has_value()) {
        throw ConfigError("export-embeddings needs exactly one of --data or --config");
    }
    const Checkpoint ckpt = Checkpoint::load(eo.checkpoint);
    if (!ckpt.meta.contains("vocab") || !ckpt.meta.contains("label_space")) {
        throw ConfigError("checkpoint lacks vocabulary or label space; was it written by train?");
    }
    EncoderModel model = model_from_checkpoint(ckpt);
    const Vocabulary vocab(ckpt.meta.at("vocab").get<std::vector<std::string>>());
    const LabelSpace labels = LabelSpace::from_json(ckpt.meta.at("label_space"));
    DualStreamConfig dual;
    if (ckpt.meta.contains("dual_config")) dual = DualStreamConfig::from_json(ckpt.meta.at("dual_config"));
    if (eo.layer == EmbeddingLayer::tapped) dual.validate(model.config().n_layers);

    std::vector<Example> examples;
    if (eo.data) {
        if (!fs::exists(*eo.data)) throw ConfigError(fmt::format("dataset {} does not exist", eo.data->string()));
        examples = load_jsonl(*eo.data, labels);
    } else {
        const PreparedData p = prepare_data(*eo.config);
        if (eo.split == "train") {
            examples = p.split.train;
        } else if (eo.split == "val") {
            examples = p.split.val;
        } else if (eo.split == "test") {
            examples = p.split.test;
        } else {
            throw ConfigError(fmt::format("split must be train, val or test, got '{}'", eo.split));
        }
    }
    if (examples.empty()) throw ValidationError("no examples to export");
    if (eo.pca && examples.size() < 2) throw ValidationError("PCA needs at least two examples");
    const EncodedDataset data = encode_dataset(examples, vocab, labels, model.config().max_seq_len);
    StagedDir dir(opts.out, opts.overwrite);

    std::vector<std::vector<double>> vectors;
    std::vector<LabelSet> preds;
    auto it = batches(data, eo.batch_size, std::nullopt, BatchMode::eval);
    while (auto batch = it.next()) {
        Graph g;
        const auto out = model.forward(g, *batch, Mode::eval);
        Var emb = eo.layer == EmbeddingLayer::pooled_final ? out.pooled
                                                           : pool(out.hidden.at(dual.tap_layer), batch->mask, dual.pooling);
        const std::size_t d = emb.shape()[1];
        for (std::size_t b = 0; b < batch->batch; ++b) {
            const auto& v = emb.value().values();
            vectors.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(b * d),
                                 v.begin() + static_cast<std::ptrdiff_t>((b + 1) * d));
        }
        for (auto& p : predict(out.logits.value(), model.config().head_kind, eo.threshold)) preds.push_back(std::move(p));
    }
    std::optional<PcaResult> proj;
    if (eo.pca) proj = pca(vectors, std::min<std::size_t>(2, vectors.front().size()));

    const std::size_t d = vectors.front().size();
    std::string csv = "id,gold,pred";
    for (std::size_t c = 0; c < d; ++c) csv += fmt::format(",e{}", c);
    if (proj) {
        for (std::size_t c = 0; c < proj->components.size(); ++c) csv += fmt::format(",pc{}", c + 1);
    }
    csv += '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        csv += csv_field(data.items[i].id) + "," + csv_field(join_labels(data.items[i].targets, labels)) + "," +
               csv_field(join_labels(preds[i], labels));
        for (double v : vectors[i]) csv += fmt::format(",{}", v);
        if (proj) {
            for (double v : proj->scores[i]) csv += fmt::format(",{}", v);
        }
        csv += '\n';
    }
    write_text(dir.path() / "embeddings.csv", csv);
    dir.commit();
    return data.size();
}

std::size_t run_gen_synth(const SynthSpec& spec, std::uint64_t seed, const RunOptions& opts) {
    spec.validate();
    const auto examples = gen_synthetic(spec, seed);
    StagedDir dir(opts.out, opts.overwrite);
    write_jsonl(dir.path() / "corpus.jsonl", examples);
    write_text(dir.path() / "label_space.json", dump_json(nlohmann::ordered_json::parse(spec.label_space().to_json().dump())));
    write_text(dir.path() / "spec.json", dump_json(nlohmann::ordered_json::parse(spec.to_json().dump())));
    dir.commit();
    return examples.size();
}

} // namespace selfaug
