#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace seglm {

// UTF-8 <-> codepoint conversion. Invalid byte sequences decode to U+FFFD.
std::vector<char32_t> utf8_decode(std::string_view s);
std::string utf8_encode(const std::vector<char32_t>& cps);
std::string utf8_encode(char32_t cp);

// Canonical composition (NFC) for the Latin-script range this toolkit targets:
// base letter + combining mark sequences are composed where a precomposed
// codepoint exists. Pairs with no precomposed form (e.g. g + combining tilde)
// are left as-is, which matches NFC for those sequences.
std::vector<char32_t> nfc(const std::vector<char32_t>& cps);
std::string nfc(std::string_view s);

// Unicode Letter classes over the Latin-script blocks (ASCII, Latin-1,
// Latin Extended A-D and Additional, IPA, modifier letters incl. U+02BC).
bool is_alpha(char32_t cp);
bool is_space(char32_t cp);
bool is_combining_mark(char32_t cp);

// Sentence-final punctuation used for long-line splitting.
bool is_sentence_punct(char32_t cp);

// Leading/trailing whitespace removed; internal runs untouched.
std::string trim(std::string_view s);
// trim + internal whitespace runs collapsed to a single ASCII space.
std::string collapse_whitespace(std::string_view s);

size_t count_codepoints(std::string_view s);

}  // namespace seglm
