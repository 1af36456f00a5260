#include "selfaug/data/vocab.hpp"

#include "selfaug/errors.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <map>

namespace selfaug {
namespace {

// Decodes one UTF-8 code point at `pos`, returning its byte length. Invalid
// sequences decode as a single byte with code point 0xFFFD.
std::size_t next_code_point(std::string_view s, std::size_t pos, char32_t& cp) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    std::size_t len = 1;
    if (b0 < 0x80) {
        cp = b0;
        return 1;
    }
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        cp = 0xFFFD;
        return 1;
    }
    if (pos + len > s.size()) {
        cp = 0xFFFD;
        return 1;
    }
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            cp = 0xFFFD;
            return 1;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    return len;
}

bool is_space(char32_t c) {
    return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_punct(char32_t c) {
    if (c < 0x80) {
        return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
               (c >= 0x7B && c <= 0x7E);
    }
    return (c >= 0xA1 && c <= 0xBF && c != 0xAA && c != 0xB5 && c != 0xBA) || c == 0xD7 || c == 0xF7 ||
           (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x303F) ||
           (c >= 0xFF01 && c <= 0xFF0F);
}

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t pos = 0; pos < text.size();) {
        char32_t cp = 0;
        const std::size_t len = next_code_point(text, pos, cp);
        if (is_space(cp)) {
            flush();
        } else if (is_punct(cp)) {
            flush();
            out.emplace_back(text.substr(pos, len));
        } else if (len == 1) {
            char c = text[pos];
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            current.push_back(c);
        } else {
            current.append(text.substr(pos, len));
        }
        pos += len;
    }
    flush();
    return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]"}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kReserved || tokens_[0] != "[PAD]" || tokens_[1] != "[UNK]" || tokens_[2] != "[CLS]") {
        throw ConfigError("vocabulary must start with [PAD], [UNK], [CLS]");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
            throw ConfigError(fmt::format("vocabulary token '{}' repeated", tokens_[i]));
        }
    }
}

Vocabulary Vocabulary::build(const std::vector<Example>& examples, std::size_t min_freq, std::size_t max_size) {
    if (examples.empty()) throw ConfigError("cannot build a vocabulary from zero examples");
    std::map<std::string, std::size_t> counts;
    for (const auto& ex : examples) {
        for (auto& tok : tokenize(ex.text)) ++counts[std::move(tok)];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, n] : counts) {
        if (n >= std::max<std::size_t>(min_freq, 1)) ranked.emplace_back(tok, n);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]"};
    for (auto& [tok, n] : ranked) {
        if (max_size != 0 && tokens.size() >= max_size) break;
        if (tok == "[PAD]" || tok == "[UNK]" || tok == "[CLS]") continue;
        tokens.push_back(tok);
    }
    return Vocabulary(std::move(tokens));
}

std::int32_t Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

EncodedText encode(std::string_view text, const Vocabulary& vocab, std::size_t max_seq_len) {
    if (max_seq_len == 0) throw ConfigError("max_seq_len must be at least 1");
    EncodedText out;
    out.ids.assign(max_seq_len, Vocabulary::kPad);
    out.mask.assign(max_seq_len, 0);
    out.ids[0] = Vocabulary::kCls;
    out.mask[0] = 1;
    std::size_t pos = 1;
    for (const auto& tok : tokenize(text)) {
        if (pos >= max_seq_len) break;
        out.ids[pos] = vocab.id(tok);
        out.mask[pos] = 1;
        ++pos;
    }
    return out;
}

std::vector<std::string> decode(const EncodedText& encoded, const Vocabulary& vocab) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < encoded.ids.size(); ++i) {
        if (encoded.mask[i] == 0 || encoded.ids[i] == Vocabulary::kCls) continue;
        out.push_back(vocab.token(encoded.ids[i]));
    }
    return out;
}

} // namespace selfaug
