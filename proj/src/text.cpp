#include "seglm/text.hpp"

#include <algorithm>
#include <array>
#include <cstdint>

namespace seglm {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

// One canonical composition pair: base + mark -> composed.
struct CompPair {
  char32_t base;
  char32_t mark;
  char32_t composed;
};

// Composition table for the Latin repertoire we care about (grave, acute,
// circumflex, tilde, macron, breve, diaeresis, ring, caron, cedilla over
// ASCII vowels/consonants that have precomposed forms). Sorted by (base, mark).
constexpr std::array<CompPair, 94> kCompositions = {{
    {U'A', 0x0300, 0x00C0}, {U'A', 0x0301, 0x00C1}, {U'A', 0x0302, 0x00C2},
    {U'A', 0x0303, 0x00C3}, {U'A', 0x0304, 0x0100}, {U'A', 0x0306, 0x0102},
    {U'A', 0x0308, 0x00C4}, {U'A', 0x030A, 0x00C5},
    {U'C', 0x0301, 0x0106}, {U'C', 0x0302, 0x0108}, {U'C', 0x030C, 0x010C},
    {U'C', 0x0327, 0x00C7},
    {U'D', 0x030C, 0x010E},
    {U'E', 0x0300, 0x00C8}, {U'E', 0x0301, 0x00C9}, {U'E', 0x0302, 0x00CA},
    {U'E', 0x0303, 0x1EBC}, {U'E', 0x0304, 0x0112}, {U'E', 0x0306, 0x0114},
    {U'E', 0x0308, 0x00CB}, {U'E', 0x030C, 0x011A},
    {U'G', 0x0306, 0x011E}, {U'G', 0x030C, 0x01E6}, {U'G', 0x0327, 0x0122},
    {U'I', 0x0300, 0x00CC}, {U'I', 0x0301, 0x00CD}, {U'I', 0x0302, 0x00CE},
    {U'I', 0x0303, 0x0128}, {U'I', 0x0304, 0x012A}, {U'I', 0x0306, 0x012C},
    {U'I', 0x0308, 0x00CF}, {U'I', 0x030C, 0x01CF},
    {U'N', 0x0300, 0x01F8}, {U'N', 0x0301, 0x0143}, {U'N', 0x0303, 0x00D1},
    {U'N', 0x030C, 0x0147}, {U'N', 0x0327, 0x0145},
    {U'O', 0x0300, 0x00D2}, {U'O', 0x0301, 0x00D3}, {U'O', 0x0302, 0x00D4},
    {U'O', 0x0303, 0x00D5}, {U'O', 0x0304, 0x014C}, {U'O', 0x0306, 0x014E},
    {U'O', 0x0308, 0x00D6},
    {U'S', 0x0301, 0x015A}, {U'S', 0x0302, 0x015C}, {U'S', 0x030C, 0x0160},
    {U'S', 0x0327, 0x015E},
    {U'T', 0x030C, 0x0164}, {U'T', 0x0327, 0x0162},
    {U'U', 0x0300, 0x00D9}, {U'U', 0x0301, 0x00DA}, {U'U', 0x0302, 0x00DB},
    {U'U', 0x0303, 0x0168}, {U'U', 0x0304, 0x016A}, {U'U', 0x0306, 0x016C},
    {U'U', 0x0308, 0x00DC}, {U'U', 0x030A, 0x016E},
    {U'Y', 0x0301, 0x00DD}, {U'Y', 0x0308, 0x0178},
    {U'Z', 0x0301, 0x0179}, {U'Z', 0x030C, 0x017D},
    {U'a', 0x0300, 0x00E0}, {U'a', 0x0301, 0x00E1}, {U'a', 0x0302, 0x00E2},
    {U'a', 0x0303, 0x00E3}, {U'a', 0x0304, 0x0101}, {U'a', 0x0306, 0x0103},
    {U'a', 0x0308, 0x00E4}, {U'a', 0x030A, 0x00E5},
    {U'c', 0x0301, 0x0107}, {U'c', 0x0302, 0x0109}, {U'c', 0x030C, 0x010D},
    {U'c', 0x0327, 0x00E7},
    {U'd', 0x030C, 0x010F},
    {U'e', 0x0300, 0x00E8}, {U'e', 0x0301, 0x00E9}, {U'e', 0x0302, 0x00EA},
    {U'e', 0x0303, 0x1EBD}, {U'e', 0x0304, 0x0113}, {U'e', 0x0306, 0x0115},
    {U'e', 0x0308, 0x00EB}, {U'e', 0x030C, 0x011B},
    {U'g', 0x0306, 0x011F}, {U'g', 0x030C, 0x01E7}, {U'g', 0x0327, 0x0123},
    {U'i', 0x0300, 0x00EC}, {U'i', 0x0301, 0x00ED}, {U'i', 0x0302, 0x00EE},
    {U'i', 0x0303, 0x0129}, {U'i', 0x0304, 0x012B}, {U'i', 0x0306, 0x012D},
    {U'i', 0x0308, 0x00EF},
}};

constexpr std::array<CompPair, 40> kCompositions2 = {{
    {U'i', 0x030C, 0x01D0},
    {U'n', 0x0300, 0x01F9}, {U'n', 0x0301, 0x0144}, {U'n', 0x0303, 0x00F1},
    {U'n', 0x030C, 0x0148}, {U'n', 0x0327, 0x0146},
    {U'o', 0x0300, 0x00F2}, {U'o', 0x0301, 0x00F3}, {U'o', 0x0302, 0x00F4},
    {U'o', 0x0303, 0x00F5}, {U'o', 0x0304, 0x014D}, {U'o', 0x0306, 0x014F},
    {U'o', 0x0308, 0x00F6},
    {U's', 0x0301, 0x015B}, {U's', 0x0302, 0x015D}, {U's', 0x030C, 0x0161},
    {U's', 0x0327, 0x015F},
    {U't', 0x030C, 0x0165}, {U't', 0x0327, 0x0163},
    {U'u', 0x0300, 0x00F9}, {U'u', 0x0301, 0x00FA}, {U'u', 0x0302, 0x00FB},
    {U'u', 0x0303, 0x0169}, {U'u', 0x0304, 0x016B}, {U'u', 0x0306, 0x016D},
    {U'u', 0x0308, 0x00FC}, {U'u', 0x030A, 0x016F},
    {U'y', 0x0301, 0x00FD}, {U'y', 0x0308, 0x00FF},
    {U'z', 0x0301, 0x017A}, {U'z', 0x030C, 0x017E},
    {0x00C6, 0x0301, 0x01FC}, {0x00E6, 0x0301, 0x01FD},
    {0x00D8, 0x0301, 0x01FE}, {0x00F8, 0x0301, 0x01FF},
    {0x00DC, 0x0301, 0x01D7}, {0x00FC, 0x0301, 0x01D8},
    {0x00DC, 0x0300, 0x01DB}, {0x00FC, 0x0300, 0x01DC},
    {U'A', 0x030C, 0x01CD},
}};

char32_t compose_pair(char32_t base, char32_t mark) {
  for (const auto& p : kCompositions)
    if (p.base == base && p.mark == mark) return p.composed;
  for (const auto& p : kCompositions2)
    if (p.base == base && p.mark == mark) return p.composed;
  return 0;
}

// Canonical combining class for the marks we handle; everything else is 0
// (starter). 0x0327 (cedilla) is class 202, the rest above are class 230.
int combining_class(char32_t cp) {
  if (cp == 0x0327) return 202;
  if (cp >= 0x0300 && cp <= 0x036F) return 230;
  return 0;
}

}  // namespace

std::vector<char32_t> utf8_decode(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  size_t i = 0;
  const auto* b = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    unsigned char c = b[i];
    if (c < 0x80) {
      out.push_back(c);
      ++i;
      continue;
    }
    int len;
    char32_t cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool ok = true;
    char32_t acc = cp;
    for (int j = 1; j < len; ++j) {
      unsigned char cc = b[i + j];
      if ((cc & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      acc = (acc << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    // Reject overlong encodings, surrogates and out-of-range values.
    constexpr char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (acc < kMin[len] || acc > 0x10FFFF || (acc >= 0xD800 && acc <= 0xDFFF)) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(acc);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = kReplacement;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string utf8_encode(const std::vector<char32_t>& cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) out += utf8_encode(cp);
  return out;
}

std::vector<char32_t> nfc(const std::vector<char32_t>& cps) {
  // Canonical ordering of combining marks within each starter run, then
  // pairwise composition. The mark inventory here only has classes 202/230,
  // so a stable sort by class is exactly canonical ordering.
  std::vector<char32_t> buf(cps);
  size_t i = 0;
  while (i < buf.size()) {
    if (combining_class(buf[i]) != 0) {
      ++i;
      continue;
    }
    size_t j = i + 1;
    while (j < buf.size() && combining_class(buf[j]) != 0) ++j;
    std::stable_sort(buf.begin() + i + 1, buf.begin() + j,
                     [](char32_t a, char32_t b) {
                       return combining_class(a) < combining_class(b);
                     });
    i = j;
  }

  std::vector<char32_t> out;
  out.reserve(buf.size());
  for (char32_t cp : buf) {
    if (!out.empty() && combining_class(cp) != 0) {
      char32_t composed = compose_pair(out.back(), cp);
      if (composed != 0) {
        out.back() = composed;
        continue;
      }
    }
    out.push_back(cp);
  }
  return out;
}

std::string nfc(std::string_view s) { return utf8_encode(nfc(utf8_decode(s))); }

bool is_alpha(char32_t cp) {
  if ((cp >= U'A' && cp <= U'Z') || (cp >= U'a' && cp <= U'z')) return true;
  if (cp == 0x00AA || cp == 0x00B5 || cp == 0x00BA) return true;  // ª µ º
  if (cp >= 0x00C0 && cp <= 0x00FF && cp != 0x00D7 && cp != 0x00F7) return true;
  if (cp >= 0x0100 && cp <= 0x02AF) return true;  // Latin Ext-A/B, IPA
  if (cp >= 0x02B0 && cp <= 0x02C1) return true;  // modifier letters
  if (cp == 0x02BC) return true;                  // modifier apostrophe (saltillo use)
  if (cp >= 0x1E00 && cp <= 0x1EFF) return true;  // Latin Extended Additional
  if (cp >= 0x2C60 && cp <= 0x2C7F) return true;  // Latin Extended-C
  if (cp >= 0xA720 && cp <= 0xA7FF) return true;  // Latin Extended-D
  if (cp >= 0xAB30 && cp <= 0xAB6F) return true;  // Latin Extended-E
  return false;
}

bool is_space(char32_t cp) {
  switch (cp) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\r':
    case 0x0B:
    case 0x0C:
    case 0x0085:  // NEL
    case 0x00A0:  // NBSP
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_combining_mark(char32_t cp) { return combining_class(cp) != 0; }

bool is_sentence_punct(char32_t cp) {
  return cp == U'.' || cp == U'!' || cp == U'?' || cp == U';' || cp == U':';
}

std::string trim(std::string_view s) {
  auto cps = utf8_decode(s);
  size_t a = 0, b = cps.size();
  while (a < b && is_space(cps[a])) ++a;
  while (b > a && is_space(cps[b - 1])) --b;
  return utf8_encode(std::vector<char32_t>(cps.begin() + a, cps.begin() + b));
}

std::string collapse_whitespace(std::string_view s) {
  auto cps = utf8_decode(s);
  std::vector<char32_t> out;
  out.reserve(cps.size());
  bool in_ws = false;
  for (char32_t cp : cps) {
    if (is_space(cp)) {
      in_ws = true;
      continue;
    }
    if (in_ws && !out.empty()) out.push_back(U' ');
    in_ws = false;
    out.push_back(cp);
  }
  return utf8_encode(out);
}

size_t count_codepoints(std::string_view s) { return utf8_decode(s).size(); }

}  // namespace seglm
