#include "selfaug/data/jsonl.hpp"

#include "selfaug/errors.hpp"

#include <fmt/format.h>
#include <fstream>
#include <unordered_set>

namespace selfaug {

std::vector<Example> read_jsonl(std::istream& in, const LabelSpace& labels) {
    std::vector<Example> out;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Example ex;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!j.is_object()) throw ParseError("not a JSON object");
            for (const char* key : {"id", "text", "labels"}) {
                if (!j.contains(key)) throw ParseError(fmt::format("missing \"{}\"", key));
            }
            ex.id = j.at("id").get<std::string>();
            ex.text = j.at("text").get<std::string>();
            ex.labels = j.at("labels").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(fmt::format("line {}: {}", line_no, e.what()));
        } catch (const ParseError& e) {
            throw ParseError(fmt::format("line {}: {}", line_no, e.what()));
        }
        try {
            labels.indices_of(ex);
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("line {}: {}", line_no, e.what()));
        }
        if (!ids.insert(ex.id).second) {
            throw ValidationError(fmt::format("line {}: duplicate id '{}'", line_no, ex.id));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Example> load_jsonl(const std::filesystem::path& path, const LabelSpace& labels) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open dataset {}", path.string()));
    return read_jsonl(in, labels);
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    for (const auto& ex : examples) {
        nlohmann::ordered_json j;
        j["id"] = ex.id;
        j["text"] = ex.text;
        j["labels"] = ex.labels;
        out << j.dump() << '\n';
    }
}

} // namespace selfaug
