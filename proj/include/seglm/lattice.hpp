#pragma once

#include <vector>

namespace seglm {

// Log-probabilities of every candidate segment of a T-character line.
// edge_logp[i][l-1] scores the segment covering characters i+1..i+l
// (0-based start index i, length l in [1, min(k, T-i)]).
struct EdgeLattice {
  int T = 0;
  int k = 0;
  std::vector<std::vector<double>> edge_logp;

  double edge(int i, int l) const { return edge_logp[i][l - 1]; }
  bool valid() const;
};

// Segment end positions, strictly increasing, last element = T. The implicit
// start is 0, so boundaries {2,5} over T=5 mean segments [1..2][3..5].
struct Segmentation {
  std::vector<int> boundaries;

  // interior gap indices (all but the final T entry)
  std::vector<int> gaps() const;
  static Segmentation from_gaps(const std::vector<int>& gaps, int T);
};

// Total log-probability of all segmentations: forward recursion in log space,
// 64-bit accumulation.
double marginal_logprob(const EdgeLattice& lattice);

// Best single segmentation. Score ties at a lattice node are broken toward
// the shorter incoming segment, which yields the segmentation whose
// right-to-left segment lengths are lexicographically smallest.
std::pair<Segmentation, double> viterbi(const EdgeLattice& lattice);

// Bits per character: -log_marginal / (T ln 2).
double bpc(double log_marginal, int T);

// Gap indices <-> per-gap bits (length T-1).
std::vector<char> gaps_to_bits(const std::vector<int>& gaps, int T);
std::vector<int> bits_to_gaps(const std::vector<char>& bits);

}  // namespace seglm
