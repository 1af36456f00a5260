#pragma once

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace selfaug {

enum class TaskKind { binary, multiclass, multilabel };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

// One text with its gold labels. Binary and multiclass examples carry exactly one label.
struct Example {
    std::string id;
    std::string text;
    std::vector<std::string> labels;

    friend bool operator==(const Example&, const Example&) = default;
};

// Ordered label inventory of a task. Index = position of first declaration.
class LabelSpace {
public:
    LabelSpace() = default;
    LabelSpace(TaskKind kind, std::vector<std::string> labels);

    TaskKind kind() const { return kind_; }
    bool multilabel() const { return kind_ == TaskKind::multilabel; }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }
    const std::string& label(std::size_t index) const { return labels_.at(index); }

    // -1 when the label is not part of the space.
    int index_of(std::string_view label) const;

    // Label indices of an example, in the example's order. Throws ValidationError
    // for unknown labels, an empty label set, or several labels on a single-label task.
    std::vector<int> indices_of(const Example& example) const;

    nlohmann::json to_json() const;
    static LabelSpace from_json(const nlohmann::json& j);
    static LabelSpace load(const std::filesystem::path& path);

    friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

private:
    TaskKind kind_ = TaskKind::binary;
    std::vector<std::string> labels_;
};

} // namespace selfaug
