#include "selfaug/harness/experiment.hpp"

#include "selfaug/data/jsonl.hpp"
#include "selfaug/errors.hpp"
#include "selfaug/random.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <set>

namespace selfaug {
namespace fs = std::filesystem;
namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, std::string_view where) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    // Absolute, so a config snapshot written elsewhere still points at the same files.
    return fs::absolute(path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

template <typename T>
std::vector<T> list_of(const nlohmann::json& j, std::string_view what) {
    if (!j.is_array() || j.empty()) throw ConfigError(fmt::format("grid.{} must be a non-empty list", what));
    return j.get<std::vector<T>>();
}

DataConfig data_from_json(const nlohmann::json& j, const fs::path& base) {
    if (!j.is_object()) throw ConfigError("data must be an object");
    reject_unknown(j, {"synth", "corpus", "train", "val", "test", "label_space", "split_ratios", "min_freq", "max_vocab"},
                   "data");
    DataConfig d;
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        if (s.is_string()) {
            const fs::path p = resolve(base, s.get<std::string>());
            std::ifstream in(p);
            if (!in) throw ConfigError(fmt::format("cannot open synth spec {}", p.string()));
            try {
                d.synth = SynthSpec::from_json(nlohmann::json::parse(in));
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError(fmt::format("{}: {}", p.string(), e.what()));
            }
        } else {
            d.synth = SynthSpec::from_json(s);
        }
    }
    if (j.contains("corpus")) d.corpus = resolve(base, j.at("corpus").get<std::string>());
    if (j.contains("train")) d.train = resolve(base, j.at("train").get<std::string>());
    if (j.contains("val")) d.val = resolve(base, j.at("val").get<std::string>());
    if (j.contains("test")) d.test = resolve(base, j.at("test").get<std::string>());
    if (j.contains("label_space")) {
        const auto& l = j.at("label_space");
        if (l.is_string()) {
            d.label_space_path = resolve(base, l.get<std::string>());
        } else {
            d.label_space = LabelSpace::from_json(l);
        }
    }
    if (j.contains("split_ratios")) {
        const auto r = j.at("split_ratios").get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("data.split_ratios needs three entries (train, val, test)");
        d.split_ratios = {r[0], r[1], r[2]};
    }
    if (j.contains("min_freq")) d.min_freq = j.at("min_freq").get<std::size_t>();
    if (j.contains("max_vocab")) d.max_vocab = j.at("max_vocab").get<std::size_t>();
    return d;
}

nlohmann::ordered_json data_to_json(const DataConfig& d) {
    nlohmann::ordered_json j;
    if (d.synth) j["synth"] = d.synth->to_json();
    if (d.corpus) j["corpus"] = d.corpus->string();
    if (d.train) j["train"] = d.train->string();
    if (d.val) j["val"] = d.val->string();
    if (d.test) j["test"] = d.test->string();
    if (d.label_space) j["label_space"] = d.label_space->to_json();
    if (d.label_space_path) j["label_space"] = d.label_space_path->string();
    j["split_ratios"] = d.split_ratios;
    j["min_freq"] = d.min_freq;
    j["max_vocab"] = d.max_vocab;
    return j;
}

GridConfig grid_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("grid must be an object");
    reject_unknown(j, {"batch_size", "alpha", "L_i", "L_j", "layer_pairs"}, "grid");
    GridConfig g;
    try {
        if (j.contains("batch_size")) g.batch_size = list_of<std::size_t>(j.at("batch_size"), "batch_size");
        if (j.contains("alpha")) g.alpha = list_of<double>(j.at("alpha"), "alpha");
        if (j.contains("L_i")) g.tap_layers = list_of<std::size_t>(j.at("L_i"), "L_i");
        if (j.contains("L_j")) g.inject_layers = list_of<std::size_t>(j.at("L_j"), "L_j");
        if (j.contains("layer_pairs")) {
            for (const auto& p : list_of<std::vector<std::size_t>>(j.at("layer_pairs"), "layer_pairs")) {
                if (p.size() != 2) throw ConfigError("grid.layer_pairs entries must be [L_i, L_j]");
                g.layer_pairs.emplace_back(p[0], p[1]);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("grid: {}", e.what()));
    }
    if (!g.layer_pairs.empty() && (!g.tap_layers.empty() || !g.inject_layers.empty())) {
        throw ConfigError("grid: give either layer_pairs or L_i/L_j lists, not both");
    }
    return g;
}

nlohmann::ordered_json grid_to_json(const GridConfig& g) {
    nlohmann::ordered_json j;
    if (!g.batch_size.empty()) j["batch_size"] = g.batch_size;
    if (!g.alpha.empty()) j["alpha"] = g.alpha;
    if (!g.tap_layers.empty()) j["L_i"] = g.tap_layers;
    if (!g.inject_layers.empty()) j["L_j"] = g.inject_layers;
    if (!g.layer_pairs.empty()) {
        j["layer_pairs"] = nlohmann::ordered_json::array();
        for (auto [a, b] : g.layer_pairs) j["layer_pairs"].push_back({a, b});
    }
    return j;
}

// json -> ordered_json with keys sorted, for stable snapshots.
nlohmann::ordered_json ordered(const nlohmann::json& j) { return nlohmann::ordered_json::parse(j.dump()); }

} // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    reject_unknown(j, {"seed", "description", "data", "model", "dual", "train", "grid", "kfold_k"}, "config");
    ExperimentConfig c;
    try {
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("description")) c.description = j.at("description").get<std::string>();
        if (!j.contains("data")) throw ConfigError("config: missing 'data' section");
        c.data = data_from_json(j.at("data"), base_dir);
        if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
        if (j.contains("dual")) c.dual = DualStreamConfig::from_json(j.at("dual"));
        if (j.contains("train")) {
            c.train = TrainConfig::from_json(j.at("train"));
            if (j.at("train").contains("seed") && j.contains("seed") && c.train.seed != c.seed) {
                throw ConfigError("train.seed disagrees with the top-level seed");
            }
            if (j.at("train").contains("seed") && !j.contains("seed")) c.seed = c.train.seed;
        }
        if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
        if (j.contains("kfold_k")) c.kfold_k = j.at("kfold_k").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("config: {}", e.what()));
    }
    c.train.seed = c.seed;
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return from_json(j, path.parent_path());
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    if (!description.empty()) j["description"] = description;
    j["data"] = data_to_json(data);
    j["model"] = ordered(model.to_json());
    j["dual"] = ordered(dual.to_json());
    j["train"] = ordered(train.to_json());
    if (grid) j["grid"] = grid_to_json(*grid);
    j["kfold_k"] = kfold_k;
    return j;
}

void ExperimentConfig::validate() const {
    const int sources = (data.synth ? 1 : 0) + (data.corpus ? 1 : 0) + ((data.train || data.val || data.test) ? 1 : 0);
    if (sources != 1) throw ConfigError("data: give exactly one of synth, corpus, or train/val/test");
    if ((data.train || data.val || data.test) && !(data.train && data.val && data.test)) {
        throw ConfigError("data: pre-split sources need all of train, val and test");
    }
    if (data.synth) data.synth->validate();
    if (!data.synth && !data.label_space && !data.label_space_path) {
        throw ConfigError("data: file sources need a label_space");
    }
    double total = 0.0;
    for (double r : data.split_ratios) {
        if (!(r >= 0.0)) throw ConfigError("data.split_ratios must be non-negative");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError(fmt::format("data.split_ratios sum to {}, not 1", total));
    if (data.split_ratios[0] <= 0.0 || data.split_ratios[1] <= 0.0) {
        throw ConfigError("data.split_ratios need non-empty train and val parts");
    }
    ModelConfig m = model;
    if (m.vocab_size == 0) m.vocab_size = Vocabulary::kReserved + 1; // filled from data later
    m.validate();
    train.validate();
    if (train.mode != TrainMode::baseline || grid) dual.validate(model.n_layers);
    if (kfold_k < 2) throw ConfigError(fmt::format("kfold_k must be at least 2, got {}", kfold_k));
    if (grid) {
        for (auto b : grid->batch_size) {
            if (b < 2) throw ConfigError(fmt::format("grid batch_size {} below 2", b));
        }
        for (double a : grid->alpha) {
            if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(fmt::format("grid alpha {} outside [0, 1]", a));
        }
        for (const auto& cell : enumerate_grid(*this)) {
            if (cell.tap_layer > model.n_layers || cell.inject_layer > model.n_layers) {
                throw ConfigError(fmt::format("grid layer pair ({}, {}) exceeds n_layers {}", cell.tap_layer,
                                              cell.inject_layer, model.n_layers));
            }
        }
    }
}

std::vector<GridCell> enumerate_grid(const ExperimentConfig& cfg) {
    const GridConfig g = cfg.grid.value_or(GridConfig{});
    const auto bs = g.batch_size.empty() ? std::vector<std::size_t>{cfg.train.batch_size} : g.batch_size;
    const auto alphas = g.alpha.empty() ? std::vector<double>{cfg.dual.alpha} : g.alpha;
    std::vector<std::pair<std::size_t, std::size_t>> pairs = g.layer_pairs;
    if (pairs.empty()) {
        const auto li = g.tap_layers.empty() ? std::vector<std::size_t>{cfg.dual.tap_layer} : g.tap_layers;
        const auto lj = g.inject_layers.empty() ? std::vector<std::size_t>{cfg.dual.inject_layer} : g.inject_layers;
        for (auto a : li) {
            for (auto b : lj) pairs.emplace_back(a, b);
        }
    }
    std::vector<GridCell> cells;
    for (auto b : bs) {
        for (double a : alphas) {
            for (auto [li, lj] : pairs) cells.push_back({b, a, li, lj});
        }
    }
    return cells;
}

ExperimentConfig apply_cell(ExperimentConfig cfg, const GridCell& cell) {
    cfg.train.batch_size = cell.batch_size;
    cfg.dual.alpha = cell.alpha;
    cfg.dual.tap_layer = cell.tap_layer;
    cfg.dual.inject_layer = cell.inject_layer;
    cfg.grid.reset();
    return cfg;
}

LabelSpace resolve_label_space(const DataConfig& data) {
    if (data.label_space) return *data.label_space;
    if (data.label_space_path) return LabelSpace::load(*data.label_space_path);
    if (data.synth) return data.synth->label_space();
    throw ConfigError("data: no label space");
}

namespace {

std::vector<Example> load_file(const fs::path& path, const LabelSpace& labels) {
    if (!fs::exists(path)) throw ConfigError(fmt::format("dataset {} does not exist", path.string()));
    return load_jsonl(path, labels);
}

} // namespace

std::vector<Example> load_all_examples(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    if (d.synth) return gen_synthetic(*d.synth, cfg.seed);
    const LabelSpace labels = resolve_label_space(d);
    if (d.corpus) return load_file(*d.corpus, labels);
    std::vector<Example> all;
    std::set<std::string> ids;
    for (const auto* p : {&d.train, &d.val, &d.test}) {
        for (auto& ex : load_file(**p, labels)) {
            if (!ids.insert(ex.id).second) throw ValidationError(fmt::format("id '{}' appears in two splits", ex.id));
            all.push_back(std::move(ex));
        }
    }
    return all;
}

PreparedData prepare_splits(const ExperimentConfig& cfg, SplitResult split) {
    if (split.train.empty() || split.val.empty()) throw ValidationError("train and val splits must be non-empty");
    PreparedData p{resolve_label_space(cfg.data), Vocabulary::build(split.train, cfg.data.min_freq, cfg.data.max_vocab),
                   std::move(split), {}, {}, {}, cfg.model};
    p.model.vocab_size = p.vocab.size();
    p.model.head_kind = p.labels.kind();
    p.model.num_labels = p.labels.size();
    p.model.validate();
    p.train = encode_dataset(p.split.train, p.vocab, p.labels, p.model.max_seq_len);
    p.val = encode_dataset(p.split.val, p.vocab, p.labels, p.model.max_seq_len);
    p.test = encode_dataset(p.split.test, p.vocab, p.labels, p.model.max_seq_len);
    return p;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    if (d.train) {
        const LabelSpace labels = resolve_label_space(d);
        SplitResult split{load_file(*d.train, labels), load_file(*d.val, labels), load_file(*d.test, labels), true};
        return prepare_splits(cfg, std::move(split));
    }
    return prepare_splits(cfg, make_splits(load_all_examples(cfg), d.split_ratios, derive_seed(cfg.seed, "split")));
}

} // namespace selfaug
