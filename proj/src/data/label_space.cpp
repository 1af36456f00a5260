#include "selfaug/data/label_space.hpp"

#include "selfaug/errors.hpp"

#include <fmt/format.h>
#include <fstream>
#include <set>

namespace selfaug {

std::string_view to_string(TaskKind kind) {
    switch (kind) {
    case TaskKind::binary: return "binary";
    case TaskKind::multiclass: return "multiclass";
    case TaskKind::multilabel: return "multilabel";
    }
    return "binary";
}

TaskKind parse_task_kind(std::string_view text) {
    if (text == "binary") return TaskKind::binary;
    if (text == "multiclass") return TaskKind::multiclass;
    if (text == "multilabel") return TaskKind::multilabel;
    throw ConfigError(fmt::format("unknown task kind '{}' (binary|multiclass|multilabel)", text));
}

LabelSpace::LabelSpace(TaskKind kind, std::vector<std::string> labels) : kind_(kind), labels_(std::move(labels)) {
    std::set<std::string> seen;
    for (const auto& l : labels_) {
        if (!seen.insert(l).second) throw ConfigError(fmt::format("label '{}' declared twice", l));
    }
    if (kind_ == TaskKind::binary && labels_.size() != 2) {
        throw ConfigError(fmt::format("binary task needs exactly 2 labels, got {}", labels_.size()));
    }
    if (labels_.size() < 2) {
        throw ConfigError(fmt::format("{} task needs at least 2 labels, got {}", to_string(kind_), labels_.size()));
    }
}

int LabelSpace::index_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == label) return static_cast<int>(i);
    }
    return -1;
}

std::vector<int> LabelSpace::indices_of(const Example& example) const {
    if (example.labels.empty()) throw ValidationError(fmt::format("example '{}' has no labels", example.id));
    if (!multilabel() && example.labels.size() != 1) {
        throw ValidationError(fmt::format("example '{}' has {} labels on a single-label task", example.id,
                                          example.labels.size()));
    }
    std::vector<int> out;
    out.reserve(example.labels.size());
    for (const auto& l : example.labels) {
        const int idx = index_of(l);
        if (idx < 0) throw ValidationError(fmt::format("example '{}': unknown label '{}'", example.id, l));
        out.push_back(idx);
    }
    return out;
}

nlohmann::json LabelSpace::to_json() const {
    return nlohmann::json{{"task_kind", std::string(to_string(kind_))}, {"labels", labels_}};
}

LabelSpace LabelSpace::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("task_kind") || !j.contains("labels")) {
        throw ConfigError("label space needs 'task_kind' and 'labels'");
    }
    try {
        return LabelSpace(parse_task_kind(j.at("task_kind").get<std::string>()),
                          j.at("labels").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("label space: {}", e.what()));
    }
}

LabelSpace LabelSpace::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open label space file {}", path.string()));
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

} // namespace selfaug
