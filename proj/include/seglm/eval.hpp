#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seglm/lattice.hpp"

namespace seglm {

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  int64_t lines = 0;
  bool has_bpc = false;
  double bpc = 0.0;

  std::string human() const;    // readable summary, percentages included
  std::string machine() const;  // "P\tR\tF1\tMCC\tlines" header + one row
};

namespace eval {

// Boundary-level correlation, pooled over every gap of every line.
// Bits are 1 for a boundary after that character (gaps 1..T-1).
double mcc(const std::vector<std::vector<uint8_t>>& pred,
           const std::vector<std::vector<uint8_t>>& gold);

struct SpanScores {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  int64_t correct = 0, pred_total = 0, gold_total = 0;
};

// Exact-span segment scoring: a predicted segment counts iff the same
// (start, end) pair is a gold segment of that line. Aggregation sums the
// counts over the corpus before dividing; macro=true averages per-line
// precision/recall instead.
SpanScores span_prf(const std::vector<Segmentation>& pred,
                    const std::vector<Segmentation>& gold, bool macro = false);

// Score a segmented output file against a gold file (both UTF-8, one
// sentence per line, segments space-separated). The two files must contain
// the same characters line for line once whitespace is removed.
EvalReport evaluate(const std::string& pred_path, const std::string& gold_path);

}  // namespace eval
}  // namespace seglm
