#pragma once

#include "selfaug/data/label_space.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace selfaug {

// Recipe for a synthetic corpus that mimics literal vs. figurative usage of
// condition words. Every template contains the placeholder "{kw}".
//
// For each gold label of an example, a template is drawn: with probability
// 1 - ambiguity a literal template filled with a keyword of that label's class,
// otherwise a figurative template filled with a keyword of a uniformly random
// class (so at ambiguity 1 the keyword carries no information about the label).
// Multilabel examples carry 1-3 distinct labels, one template segment per label.
struct SynthSpec {
    TaskKind task_kind = TaskKind::binary;
    std::vector<std::string> classes;
    std::map<std::string, std::vector<std::string>> keywords;
    std::vector<std::string> literal_templates;
    std::vector<std::string> figurative_templates;
    double ambiguity = 0.0;
    std::size_t count = 0;
    std::string id_prefix = "syn";

    // Keywords must be single tokens, distinct across classes, and absent from the templates.
    void validate() const;
    LabelSpace label_space() const;

    nlohmann::json to_json() const;
    static SynthSpec from_json(const nlohmann::json& j);
};

std::vector<Example> gen_synthetic(const SynthSpec& spec, std::uint64_t seed);

} // namespace selfaug
