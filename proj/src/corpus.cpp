#include "seglm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "seglm/common.hpp"
#include "seglm/text.hpp"

namespace seglm {

CharVocab::CharVocab(const std::vector<char32_t>& chars_sorted)
    : chars_(chars_sorted) {
  index_.reserve(chars_.size());
  for (size_t i = 0; i < chars_.size(); ++i)
    index_.emplace_back(chars_[i], kNumSpecials + static_cast<int>(i));
  std::sort(index_.begin(), index_.end());
  for (size_t i = 1; i < index_.size(); ++i)
    if (index_[i].first == index_[i - 1].first)
      throw DataError("duplicate character in vocab");
}

int CharVocab::encode(char32_t cp) const {
  auto it = std::lower_bound(index_.begin(), index_.end(),
                             std::make_pair(cp, 0));
  if (it != index_.end() && it->first == cp) return it->second;
  return kUnk;
}

bool CharVocab::contains(char32_t cp) const { return encode(cp) != kUnk; }

char32_t CharVocab::char_at(int id) const {
  if (id < kNumSpecials || id >= size())
    throw DataError("vocab id out of range: " + std::to_string(id));
  return chars_[static_cast<size_t>(id - kNumSpecials)];
}

std::string CharVocab::token_name(int id) const {
  switch (id) {
    case kPad: return "<pad>";
    case kBos: return "<bos>";
    case kEos: return "<eos>";
    case kUnk: return "<unk>";
    case kSegStart: return "<seg-start>";
    case kSegEnd: return "<seg-end>";
    default: return utf8_encode(char_at(id));
  }
}

uint64_t CharVocab::fingerprint() const {
  Fnv1a h;
  h.update("seglm-vocab v1");
  h.update_u64(static_cast<uint64_t>(chars_.size()));
  for (char32_t cp : chars_) h.update_u64(static_cast<uint64_t>(cp));
  return h.digest();
}

std::string CharVocab::to_text() const {
  std::string out = "seglm-vocab v1\n";
  for (int id = 0; id < kNumSpecials; ++id) out += token_name(id) + "\n";
  for (char32_t cp : chars_) out += utf8_encode(cp) + "\n";
  return out;
}

CharVocab CharVocab::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "seglm-vocab v1")
    throw DataError("bad vocab header");
  static const char* kSpecials[] = {"<pad>",       "<bos>",     "<eos>",
                                    "<unk>",       "<seg-start>",
                                    "<seg-end>"};
  for (const char* want : kSpecials) {
    if (!std::getline(in, line) || line != want)
      throw DataError("bad vocab specials list");
  }
  std::vector<char32_t> chars;
  while (std::getline(in, line)) {
    auto cps = utf8_decode(line);
    if (cps.size() != 1)
      throw DataError("vocab line is not a single character");
    chars.push_back(cps[0]);
  }
  return CharVocab(chars);
}

void CharVocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << to_text();
  if (!out) throw DataError("write failed: " + path);
}

CharVocab CharVocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_text(ss.str());
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in " + path);
  }
}

namespace corpus {

namespace {

bool has_url(const std::string& line) {
  return line.find("http://") != std::string::npos ||
         line.find("https://") != std::string::npos ||
         line.find("www.") != std::string::npos;
}

}  // namespace

RawCorpus clean_lines(const RawCorpus& in, const CleaningRules& rules) {
  RawCorpus out;
  out.source_tag = in.source_tag;
  out.provenance = in.provenance;
  for (const auto& line : in.lines) {
    if (rules.drop_urls && has_url(line)) continue;
    bool blocked = false;
    for (const auto& sub : rules.blocklist) {
      if (!sub.empty() && line.find(sub) != std::string::npos) {
        blocked = true;
        break;
      }
    }
    if (blocked) continue;
    if (rules.drop_no_alpha || rules.drop_mostly_non_alpha) {
      auto cps = utf8_decode(line);
      int64_t alpha = 0;
      for (char32_t cp : cps) alpha += is_alpha(cp) ? 1 : 0;
      if (rules.drop_no_alpha && alpha == 0) continue;
      if (rules.drop_mostly_non_alpha && !cps.empty()) {
        double frac = static_cast<double>(alpha) / static_cast<double>(cps.size());
        if (frac < rules.min_alpha_fraction) continue;
      }
    }
    out.lines.push_back(line);
  }
  return out;
}

RawCorpus split_long_lines(const RawCorpus& in, int max_chars) {
  if (max_chars < 1) throw DataError("max_chars must be >= 1");
  RawCorpus out;
  out.source_tag = in.source_tag;
  out.provenance = in.provenance;
  const size_t maxc = static_cast<size_t>(max_chars);
  for (const auto& line : in.lines) {
    auto cps = utf8_decode(line);
    if (cps.size() <= maxc) {
      out.lines.push_back(line);
      continue;
    }
    size_t pos = 0;
    while (cps.size() - pos > maxc) {
      // Prefer the rightmost sentence punctuation that still fits, then the
      // rightmost whitespace, else cut hard at the limit.
      size_t cut = 0;  // piece = cps[pos, pos+cut)
      bool found = false;
      for (size_t off = maxc; off-- > 0;) {
        if (is_sentence_punct(cps[pos + off])) {
          cut = off + 1;
          found = true;
          break;
        }
      }
      if (!found) {
        for (size_t off = maxc; off >= 1; --off) {
          if (off < cps.size() - pos && is_space(cps[pos + off])) {
            cut = off;
            found = true;
            break;
          }
        }
      }
      if (!found) cut = maxc;
      out.lines.push_back(utf8_encode(
          std::vector<char32_t>(cps.begin() + pos, cps.begin() + pos + cut)));
      pos += cut;
      while (pos < cps.size() && is_space(cps[pos])) ++pos;  // drop delimiter
    }
    if (pos < cps.size())
      out.lines.push_back(
          utf8_encode(std::vector<char32_t>(cps.begin() + pos, cps.end())));
  }
  return out;
}

RawCorpus dedupe(const RawCorpus& in) {
  RawCorpus out;
  out.source_tag = in.source_tag;
  out.provenance = in.provenance;
  std::unordered_set<std::string> seen;
  seen.reserve(in.lines.size() * 2);
  for (const auto& line : in.lines) {
    if (seen.insert(nfc(line)).second) out.lines.push_back(line);
  }
  return out;
}

RawCorpus remove_overlap(const RawCorpus& train, const RawCorpus& heldout) {
  std::unordered_set<std::string> held;
  held.reserve(heldout.lines.size() * 2);
  for (const auto& line : heldout.lines)
    held.insert(collapse_whitespace(nfc(line)));
  RawCorpus out;
  out.source_tag = train.source_tag;
  out.provenance = train.provenance;
  for (const auto& line : train.lines) {
    if (!held.count(collapse_whitespace(nfc(line)))) out.lines.push_back(line);
  }
  return out;
}

RawCorpus downsample(const RawCorpus& in, int64_t n, uint64_t seed) {
  const int64_t total = static_cast<int64_t>(in.lines.size());
  if (n < 0 || n > total)
    throw DataError("downsample: requested " + std::to_string(n) +
                    " lines from a corpus of " + std::to_string(total));
  // Fisher-Yates over the index vector, take the first n, restore order.
  // Taking a prefix means samples at increasing n nest for a fixed seed.
  std::vector<int64_t> idx(in.lines.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x647377u /* "dsw" */));
  for (int64_t i = 0; i < total - 1; ++i) {
    int64_t j = i + static_cast<int64_t>(rng.uniform_int(
                        static_cast<uint64_t>(total - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<size_t>(n));
  std::sort(idx.begin(), idx.end());
  RawCorpus out;
  out.source_tag = in.source_tag;
  out.provenance = in.provenance;
  out.lines.reserve(idx.size());
  for (int64_t i : idx) out.lines.push_back(in.lines[static_cast<size_t>(i)]);
  return out;
}

RawCorpus concat_corpora(const std::vector<RawCorpus>& parts) {
  RawCorpus out;
  size_t total = 0;
  for (const auto& p : parts) total += p.lines.size();
  out.lines.reserve(total);
  for (const auto& p : parts) {
    out.lines.insert(out.lines.end(), p.lines.begin(), p.lines.end());
    if (!p.source_tag.empty()) {
      if (!out.source_tag.empty()) out.source_tag += "+";
      out.source_tag += p.source_tag;
    }
  }
  return out;
}

namespace {

std::set<char32_t> distinct_chars(const RawCorpus& in) {
  std::set<char32_t> chars;
  for (const auto& line : in.lines) {
    for (char32_t cp : nfc(utf8_decode(line))) {
      if (!is_space(cp)) chars.insert(cp);
    }
  }
  return chars;
}

}  // namespace

CharVocab build_vocab(const RawCorpus& in) {
  if (in.lines.empty()) throw DataError("build_vocab: empty corpus");
  auto chars = distinct_chars(in);
  return CharVocab(std::vector<char32_t>(chars.begin(), chars.end()));
}

std::pair<CharVocab, std::vector<int>> extend_vocab(const CharVocab& base,
                                                    const RawCorpus& in) {
  auto chars = distinct_chars(in);
  std::vector<char32_t> merged = base.chars();
  std::vector<int> new_ids;
  for (char32_t cp : chars) {
    if (base.contains(cp)) continue;
    new_ids.push_back(CharVocab::kNumSpecials + static_cast<int>(merged.size()));
    merged.push_back(cp);
  }
  return {CharVocab(merged), new_ids};
}

EncodedLine encode_line(const CharVocab& vocab, std::string_view line, bool gold) {
  EncodedLine out;
  out.raw = std::string(line);
  out.has_gold = gold;
  auto cps = nfc(utf8_decode(line));
  bool pending_gap = false;
  for (char32_t cp : cps) {
    if (is_space(cp)) {
      pending_gap = true;
      continue;
    }
    if (pending_gap && !out.ids.empty() && gold)
      out.gold_boundaries.push_back(static_cast<int>(out.ids.size()));
    pending_gap = false;
    out.ids.push_back(vocab.encode(cp));
  }
  if (out.ids.empty())
    throw DataError("encode_line: line is empty after whitespace removal");
  return out;
}

std::string decode_ids(const CharVocab& vocab, const std::vector<int>& ids) {
  std::vector<char32_t> cps;
  cps.reserve(ids.size());
  for (int id : ids) cps.push_back(vocab.char_at(id));
  return utf8_encode(cps);
}

std::string render_segmented(const CharVocab& vocab, const std::vector<int>& ids,
                             const std::vector<int>& boundaries) {
  std::string out;
  size_t bi = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    out += vocab.token_name(ids[i]);
    int gap = static_cast<int>(i) + 1;
    if (bi < boundaries.size() && boundaries[bi] == gap) {
      if (i + 1 < ids.size()) out += ' ';
      ++bi;
    }
  }
  return out;
}

StatsReport corpus_stats(const RawCorpus& in) {
  StatsReport r;
  r.lines = static_cast<int64_t>(in.lines.size());
  std::unordered_set<std::string> tokens;
  std::set<char32_t> chars;
  for (const auto& line : in.lines) {
    auto cps = nfc(utf8_decode(line));
    std::vector<char32_t> tok;
    auto flush = [&] {
      if (tok.empty()) return;
      ++r.total_tokens;
      tokens.insert(utf8_encode(tok));
      tok.clear();
    };
    for (char32_t cp : cps) {
      if (is_space(cp)) {
        flush();
        continue;
      }
      ++r.total_characters;
      chars.insert(cp);
      tok.push_back(cp);
    }
    flush();
  }
  r.unique_tokens = static_cast<int64_t>(tokens.size());
  r.unique_characters = static_cast<int64_t>(chars.size());
  r.mean_token_length =
      r.total_tokens == 0
          ? 0.0
          : static_cast<double>(r.total_characters) /
                static_cast<double>(r.total_tokens);
  return r;
}

RawCorpus read_corpus(const std::string& path, std::string source_tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  RawCorpus out;
  out.source_tag = std::move(source_tag);
  out.provenance = path;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.lines.push_back(line);
  }
  return out;
}

void write_corpus(const RawCorpus& in, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& line : in.lines) out << line << "\n";
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace corpus
}  // namespace seglm
