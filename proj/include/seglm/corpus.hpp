#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seglm {

// A text corpus held in memory, one sentence per line.
struct RawCorpus {
  std::vector<std::string> lines;
  std::string source_tag;   // e.g. language code
  std::string provenance;   // free-form origin note
};

struct CleaningRules {
  bool drop_urls = false;
  bool drop_no_alpha = false;
  // Drop lines where the alphabetic fraction of codepoints falls below
  // min_alpha_fraction (i.e. keep iff alpha/total >= threshold).
  bool drop_mostly_non_alpha = false;
  double min_alpha_fraction = 0.5;
  // Lines containing any of these substrings are dropped (boilerplate).
  std::vector<std::string> blocklist;
};

// Character-level vocabulary. Ids 0..5 are reserved for the special symbols,
// corpus characters start at id 6 and are assigned in ascending codepoint
// order so identical corpora always produce identical vocabs.
class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSegStart = 4;
  static constexpr int kSegEnd = 5;
  static constexpr int kNumSpecials = 6;

  CharVocab() = default;
  explicit CharVocab(const std::vector<char32_t>& chars_sorted);

  int size() const { return kNumSpecials + static_cast<int>(chars_.size()); }
  int encode(char32_t cp) const;                 // kUnk when absent
  bool contains(char32_t cp) const;
  char32_t char_at(int id) const;                // id >= kNumSpecials
  std::string token_name(int id) const;          // "<pad>", "a", ...
  const std::vector<char32_t>& chars() const { return chars_; }
  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  // Order-sensitive content fingerprint, stable across processes.
  uint64_t fingerprint() const;

  std::string to_text() const;
  static CharVocab from_text(const std::string& text);
  void save(const std::string& path) const;
  static CharVocab load(const std::string& path);

 private:
  std::vector<char32_t> chars_;                  // id - kNumSpecials -> char
  std::vector<std::pair<char32_t, int>> index_;  // sorted (char, id)
};

struct EncodedLine {
  std::vector<int> ids;              // character ids, no specials
  std::vector<int> gold_boundaries;  // sorted gap indices, boundary after char g (1-based)
  bool has_gold = false;             // line was encoded keeping its segmentation
  std::string raw;                   // original line as read
};

struct StatsReport {
  int64_t lines = 0;
  int64_t total_tokens = 0;
  int64_t unique_tokens = 0;
  int64_t total_characters = 0;
  int64_t unique_characters = 0;
  double mean_token_length = 0.0;
};

namespace corpus {

RawCorpus clean_lines(const RawCorpus& in, const CleaningRules& rules);
RawCorpus split_long_lines(const RawCorpus& in, int max_chars);
RawCorpus dedupe(const RawCorpus& in);
RawCorpus remove_overlap(const RawCorpus& train, const RawCorpus& heldout);
RawCorpus downsample(const RawCorpus& in, int64_t n, uint64_t seed);
RawCorpus concat_corpora(const std::vector<RawCorpus>& parts);

CharVocab build_vocab(const RawCorpus& in);
// Returns the extended vocab plus the ids that were appended.
std::pair<CharVocab, std::vector<int>> extend_vocab(const CharVocab& base,
                                                    const RawCorpus& in);

EncodedLine encode_line(const CharVocab& vocab, std::string_view line, bool gold);
// Inverse of encode_line for known-vocab lines: ids -> unsegmented string.
std::string decode_ids(const CharVocab& vocab, const std::vector<int>& ids);
// Render with an ASCII space inserted after each boundary gap index.
std::string render_segmented(const CharVocab& vocab, const std::vector<int>& ids,
                             const std::vector<int>& boundaries);

StatsReport corpus_stats(const RawCorpus& in);

RawCorpus read_corpus(const std::string& path, std::string source_tag = "");
void write_corpus(const RawCorpus& in, const std::string& path);

}  // namespace corpus
}  // namespace seglm
