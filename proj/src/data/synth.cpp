#include "selfaug/data/synth.hpp"

#include "selfaug/data/vocab.hpp"
#include "selfaug/errors.hpp"
#include "selfaug/random.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <set>

namespace selfaug {
namespace {

constexpr std::string_view kPlaceholder = "{kw}";

std::string fill(const std::string& tmpl, const std::string& keyword) {
    std::string out = tmpl;
    const auto pos = out.find(kPlaceholder);
    out.replace(pos, kPlaceholder.size(), keyword);
    return out;
}

} // namespace

void SynthSpec::validate() const {
    if (classes.size() < 2) throw ConfigError("synth spec: need at least 2 classes");
    if (task_kind == TaskKind::binary && classes.size() != 2) throw ConfigError("synth spec: binary needs 2 classes");
    if (ambiguity < 0.0 || ambiguity > 1.0) throw ConfigError(fmt::format("synth spec: ambiguity {} outside [0, 1]", ambiguity));
    if (count == 0) throw ConfigError("synth spec: count must be positive");
    if (literal_templates.empty() || figurative_templates.empty()) {
        throw ConfigError("synth spec: literal and figurative template pools must be non-empty");
    }
    std::set<std::string> all_keywords;
    for (const auto& cls : classes) {
        auto it = keywords.find(cls);
        if (it == keywords.end() || it->second.empty()) {
            throw ConfigError(fmt::format("synth spec: empty keyword list for class '{}'", cls));
        }
        for (const auto& kw : it->second) {
            const auto toks = tokenize(kw);
            if (toks.size() != 1 || toks.front() != kw) {
                throw ConfigError(fmt::format("synth spec: keyword '{}' must be one lowercase token", kw));
            }
            if (!all_keywords.insert(kw).second) {
                throw ConfigError(fmt::format("synth spec: keyword '{}' used by more than one class", kw));
            }
        }
    }
    for (const auto* pool : {&literal_templates, &figurative_templates}) {
        for (const auto& t : *pool) {
            const auto pos = t.find(kPlaceholder);
            if (pos == std::string::npos) throw ConfigError(fmt::format("synth spec: template '{}' lacks {{kw}}", t));
            std::string rest = t;
            rest.replace(pos, kPlaceholder.size(), " ");
            for (const auto& tok : tokenize(rest)) {
                if (all_keywords.count(tok)) {
                    throw ConfigError(fmt::format("synth spec: template '{}' contains keyword '{}'", t, tok));
                }
            }
        }
    }
}

LabelSpace SynthSpec::label_space() const { return LabelSpace(task_kind, classes); }

nlohmann::json SynthSpec::to_json() const {
    return nlohmann::json{{"task_kind", std::string(to_string(task_kind))},
                          {"classes", classes},
                          {"keywords", keywords},
                          {"literal_templates", literal_templates},
                          {"figurative_templates", figurative_templates},
                          {"ambiguity", ambiguity},
                          {"count", count},
                          {"id_prefix", id_prefix}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        s.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
        s.classes = j.at("classes").get<std::vector<std::string>>();
        s.keywords = j.at("keywords").get<std::map<std::string, std::vector<std::string>>>();
        s.literal_templates = j.at("literal_templates").get<std::vector<std::string>>();
        s.figurative_templates = j.at("figurative_templates").get<std::vector<std::string>>();
        s.ambiguity = j.at("ambiguity").get<double>();
        s.count = j.at("count").get<std::size_t>();
        s.id_prefix = j.value("id_prefix", std::string("syn"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("synth spec: {}", e.what()));
    }
    s.validate();
    return s;
}

std::vector<Example> gen_synthetic(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(derive_seed(seed, "synth"));
    const std::size_t n_classes = spec.classes.size();
    std::vector<Example> out;
    out.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        std::vector<std::size_t> label_ids;
        if (spec.task_kind == TaskKind::multilabel) {
            const std::size_t n_labels = 1 + uniform_index(rng, std::min<std::size_t>(3, n_classes));
            std::vector<std::size_t> pool(n_classes);
            for (std::size_t c = 0; c < n_classes; ++c) pool[c] = c;
            for (std::size_t k = 0; k < n_labels; ++k) {
                const std::size_t pick = k + uniform_index(rng, n_classes - k);
                std::swap(pool[k], pool[pick]);
                label_ids.push_back(pool[k]);
            }
            std::sort(label_ids.begin(), label_ids.end());
        } else {
            label_ids.push_back(uniform_index(rng, n_classes));
        }

        Example ex;
        ex.id = fmt::format("{}-{:05d}", spec.id_prefix, i);
        std::vector<std::string> segments;
        for (std::size_t cls : label_ids) {
            ex.labels.push_back(spec.classes[cls]);
            const bool figurative = uniform01(rng) < spec.ambiguity;
            const std::size_t kw_class = figurative ? uniform_index(rng, n_classes) : cls;
            const auto& kws = spec.keywords.at(spec.classes[kw_class]);
            const auto& keyword = kws[uniform_index(rng, kws.size())];
            const auto& pool = figurative ? spec.figurative_templates : spec.literal_templates;
            segments.push_back(fill(pool[uniform_index(rng, pool.size())], keyword));
        }
        for (std::size_t k = 0; k < segments.size(); ++k) {
            if (k > 0) ex.text += " and ";
            ex.text += segments[k];
        }
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace selfaug
