#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace evsynth::text {

/// Half-open byte range [begin, end) into a UTF-8 source string.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool operator==(const Span&) const = default;
};

struct Token {
    std::string text;  // lowercased
    Span span;         // into the original input
};

std::string trim(std::string_view s);
/// Trims and collapses internal whitespace runs to a single space.
std::string collapse_whitespace(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercased alphanumeric runs; bytes >= 0x80 are kept inside tokens so
/// multi-byte characters are never split.
std::vector<Token> tokenize(std::string_view s);
std::vector<std::string> tokenize_words(std::string_view s);

bool is_stopword(std::string_view lowered_token);

/// Porter (1980) suffix stripper; input must be lowercase ASCII.
std::string porter_stem(std::string_view word);

/// Lowercased, stopword-free, stemmed tokens, in order (duplicates kept).
std::vector<std::string> content_terms(std::string_view s);
std::set<std::string> content_term_set(std::string_view s);

/// Sentence segmentation on `.`, `!`, `?` followed by whitespace or end of
/// input. Returned spans are trimmed of surrounding whitespace and non-empty.
std::vector<Span> split_sentences(std::string_view s);

/// Moves `pos` backward until it sits on a UTF-8 code point boundary.
std::size_t utf8_floor(std::string_view s, std::size_t pos) noexcept;

}  // namespace evsynth::text
