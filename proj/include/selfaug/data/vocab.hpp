#pragma once

#include "selfaug/data/label_space.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace selfaug {

// Lowercases ASCII letters and splits on Unicode whitespace. Punctuation code
// points (ASCII punctuation, Latin-1 punctuation, General Punctuation, CJK
// symbols) become single-character tokens. Input is UTF-8; invalid bytes are
// kept as part of the surrounding word.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnk = 1;
    static constexpr std::int32_t kCls = 2;
    static constexpr std::size_t kReserved = 3;

    Vocabulary();
    // Rebuild from an id-ordered token list whose first entries are the reserved tokens.
    explicit Vocabulary(std::vector<std::string> tokens);

    // Tokens with count >= min_freq, ordered by (count desc, token asc). max_size
    // caps the total size including the reserved ids; 0 means no cap.
    static Vocabulary build(const std::vector<Example>& examples, std::size_t min_freq, std::size_t max_size);

    std::size_t size() const { return tokens_.size(); }
    std::int32_t id(std::string_view token) const;
    const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
};

struct EncodedText {
    std::vector<std::int32_t> ids;
    std::vector<std::int32_t> mask;
};

// [CLS] + token ids, truncated to max_seq_len and padded with PAD to exactly max_seq_len.
EncodedText encode(std::string_view text, const Vocabulary& vocab, std::size_t max_seq_len);

// Tokens for the real positions, CLS and padding dropped.
std::vector<std::string> decode(const EncodedText& encoded, const Vocabulary& vocab);

} // namespace selfaug
