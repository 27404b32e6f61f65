#include "seglm/eval.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "seglm/common.hpp"
#include "seglm/corpus.hpp"
#include "seglm/text.hpp"

namespace seglm {

std::string EvalReport::human() const {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "lines evaluated: %lld\n",
                static_cast<long long>(lines));
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "precision: %.4f (%.1f%%)\nrecall:    %.4f (%.1f%%)\n"
                "f1:        %.4f (%.1f%%)\nmcc:       %.4f\n",
                precision, 100.0 * precision, recall, 100.0 * recall, f1,
                100.0 * f1, mcc);
  out += buf;
  if (has_bpc) {
    std::snprintf(buf, sizeof(buf), "bpc:       %.4f\n", bpc);
    out += buf;
  }
  return out;
}

std::string EvalReport::machine() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "P\tR\tF1\tMCC\tlines\n%.6f\t%.6f\t%.6f\t%.6f\t%lld\n",
                precision, recall, f1, mcc, static_cast<long long>(lines));
  return buf;
}

namespace eval {

double mcc(const std::vector<std::vector<uint8_t>>& pred,
           const std::vector<std::vector<uint8_t>>& gold) {
  if (pred.size() != gold.size())
    throw DataError("mcc: " + std::to_string(pred.size()) +
                    " predicted lines vs " + std::to_string(gold.size()) +
                    " gold lines");
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size())
      throw DataError("mcc: boundary-vector length mismatch at line " +
                      std::to_string(i + 1));
    for (size_t g = 0; g < pred[i].size(); ++g) {
      const bool p = pred[i][g] != 0, y = gold[i][g] != 0;
      if (p && y)
        ++tp;
      else if (!p && !y)
        ++tn;
      else if (p)
        ++fp;
      else
        ++fn;
    }
  }
  const double denom = static_cast<double>(tp + fp) *
                       static_cast<double>(tp + fn) *
                       static_cast<double>(tn + fp) *
                       static_cast<double>(tn + fn);
  if (denom == 0.0) return 0.0;
  return (static_cast<double>(tp) * tn - static_cast<double>(fp) * fn) /
         std::sqrt(denom);
}

namespace {

std::vector<std::pair<int, int>> spans_of(const Segmentation& s) {
  std::vector<std::pair<int, int>> out;
  int start = 0;
  for (int b : s.boundaries) {
    out.emplace_back(start, b);
    start = b;
  }
  return out;
}

double harmonic(double p, double r) {
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace

SpanScores span_prf(const std::vector<Segmentation>& pred,
                    const std::vector<Segmentation>& gold, bool macro) {
  if (pred.size() != gold.size())
    throw DataError("span_prf: " + std::to_string(pred.size()) +
                    " predicted lines vs " + std::to_string(gold.size()) +
                    " gold lines");
  SpanScores s;
  double macro_p = 0.0, macro_r = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const auto ps = spans_of(pred[i]);
    const auto gs = spans_of(gold[i]);
    const int pt = ps.empty() ? 0 : ps.back().second;
    const int gt = gs.empty() ? 0 : gs.back().second;
    if (pt != gt)
      throw DataError("span_prf: line " + std::to_string(i + 1) + " has " +
                      std::to_string(pt) + " predicted characters vs " +
                      std::to_string(gt) + " gold");
    std::set<std::pair<int, int>> gset(gs.begin(), gs.end());
    int64_t correct = 0;
    for (const auto& sp : ps) correct += gset.count(sp);
    s.correct += correct;
    s.pred_total += static_cast<int64_t>(ps.size());
    s.gold_total += static_cast<int64_t>(gs.size());
    if (macro) {
      macro_p += ps.empty() ? 0.0 : static_cast<double>(correct) / ps.size();
      macro_r += gs.empty() ? 0.0 : static_cast<double>(correct) / gs.size();
    }
  }
  if (macro) {
    const double n = pred.empty() ? 1.0 : static_cast<double>(pred.size());
    s.precision = macro_p / n;
    s.recall = macro_r / n;
  } else {
    s.precision =
        s.pred_total ? static_cast<double>(s.correct) / s.pred_total : 0.0;
    s.recall =
        s.gold_total ? static_cast<double>(s.correct) / s.gold_total : 0.0;
  }
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

namespace {

struct ParsedLine {
  std::vector<char32_t> chars;   // whitespace removed
  std::vector<uint8_t> bits;     // gaps 1..T-1
  Segmentation seg;
};

ParsedLine parse_segmented(const std::string& line) {
  ParsedLine out;
  auto cps = nfc(utf8_decode(line));
  bool pending = false;
  std::vector<int> gaps;
  for (char32_t cp : cps) {
    if (is_space(cp)) {
      pending = true;
      continue;
    }
    if (pending && !out.chars.empty())
      gaps.push_back(static_cast<int>(out.chars.size()));
    pending = false;
    out.chars.push_back(cp);
  }
  const int T = static_cast<int>(out.chars.size());
  if (T == 0) return out;
  out.bits.assign(T > 0 ? T - 1 : 0, 0);
  for (int g : gaps) out.bits[g - 1] = 1;
  out.seg.boundaries = gaps;
  out.seg.boundaries.push_back(T);
  return out;
}

}  // namespace

EvalReport evaluate(const std::string& pred_path,
                    const std::string& gold_path) {
  RawCorpus pred = corpus::read_corpus(pred_path);
  RawCorpus gold = corpus::read_corpus(gold_path);
  if (pred.lines.empty() || gold.lines.empty())
    throw DataError("evaluate: empty input file: " +
                    (pred.lines.empty() ? pred_path : gold_path));
  if (pred.lines.size() != gold.lines.size())
    throw DataError("evaluate: " + std::to_string(pred.lines.size()) +
                    " lines in " + pred_path + " vs " +
                    std::to_string(gold.lines.size()) + " in " + gold_path);

  std::vector<std::vector<uint8_t>> pred_bits, gold_bits;
  std::vector<Segmentation> pred_segs, gold_segs;
  for (size_t i = 0; i < pred.lines.size(); ++i) {
    ParsedLine p = parse_segmented(pred.lines[i]);
    ParsedLine g = parse_segmented(gold.lines[i]);
    if (p.chars != g.chars)
      throw DataError("evaluate: character mismatch at line " +
                      std::to_string(i + 1));
    if (p.chars.empty()) continue;  // blank in both files
    pred_bits.push_back(std::move(p.bits));
    gold_bits.push_back(std::move(g.bits));
    pred_segs.push_back(std::move(p.seg));
    gold_segs.push_back(std::move(g.seg));
  }
  if (pred_segs.empty())
    throw DataError("evaluate: no scorable lines in " + pred_path);

  SpanScores s = span_prf(pred_segs, gold_segs);
  EvalReport r;
  r.precision = s.precision;
  r.recall = s.recall;
  r.f1 = s.f1;
  r.mcc = mcc(pred_bits, gold_bits);
  r.lines = static_cast<int64_t>(pred_segs.size());
  return r;
}

}  // namespace eval
}  // namespace seglm
