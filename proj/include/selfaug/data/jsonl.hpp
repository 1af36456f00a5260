#pragma once

#include "selfaug/data/label_space.hpp"

#include <filesystem>
#include <istream>
#include <vector>

namespace selfaug {

// Reads one example per line: {"id": str, "text": str, "labels": [str, ...]}.
// Blank lines are skipped. Malformed lines raise ParseError with the 1-based line
// number; unknown labels and duplicate ids raise ValidationError.
std::vector<Example> load_jsonl(const std::filesystem::path& path, const LabelSpace& labels);
std::vector<Example> read_jsonl(std::istream& in, const LabelSpace& labels);

void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples);

} // namespace selfaug
