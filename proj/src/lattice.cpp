#include "seglm/lattice.hpp"

#include <algorithm>
#include <cmath>

#include "seglm/common.hpp"

namespace seglm {

bool EdgeLattice::valid() const {
  if (T < 1 || k < 1) return false;
  if (static_cast<int>(edge_logp.size()) != T) return false;
  for (int i = 0; i < T; ++i) {
    const int want = std::min(k, T - i);
    if (static_cast<int>(edge_logp[i].size()) != want) return false;
  }
  return true;
}

std::vector<int> Segmentation::gaps() const {
  if (boundaries.empty()) return {};
  return std::vector<int>(boundaries.begin(), boundaries.end() - 1);
}

Segmentation Segmentation::from_gaps(const std::vector<int>& gaps, int T) {
  if (T < 1) throw DataError("segmentation needs T >= 1");
  Segmentation s;
  int prev = 0;
  for (int g : gaps) {
    if (g <= prev || g >= T)
      throw DataError("bad gap index " + std::to_string(g) + " for T=" +
                      std::to_string(T));
    s.boundaries.push_back(g);
    prev = g;
  }
  s.boundaries.push_back(T);
  return s;
}

double marginal_logprob(const EdgeLattice& lattice) {
  if (!lattice.valid()) throw DataError("marginal_logprob: malformed lattice");
  const int T = lattice.T, k = lattice.k;
  std::vector<double> alpha(T + 1, 0.0);
  std::vector<double> terms;
  for (int t = 1; t <= T; ++t) {
    terms.clear();
    for (int j = std::max(0, t - k); j <= t - 1; ++j)
      terms.push_back(alpha[j] + lattice.edge(j, t - j));
    double mx = terms[0];
    for (double v : terms) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : terms) s += std::exp(v - mx);
    alpha[t] = mx + std::log(s);
  }
  return alpha[T];
}

std::pair<Segmentation, double> viterbi(const EdgeLattice& lattice) {
  if (!lattice.valid()) throw DataError("viterbi: malformed lattice");
  const int T = lattice.T, k = lattice.k;
  constexpr double kNegInf = -1e300;
  std::vector<double> best(T + 1, kNegInf);
  std::vector<int> back(T + 1, 0);
  best[0] = 0.0;
  for (int t = 1; t <= T; ++t) {
    // increasing l with strict > keeps the shortest incoming segment on ties
    for (int l = 1; l <= std::min(k, t); ++l) {
      const double cand = best[t - l] + lattice.edge(t - l, l);
      if (cand > best[t]) {
        best[t] = cand;
        back[t] = l;
      }
    }
  }
  Segmentation seg;
  for (int t = T; t > 0; t -= back[t]) seg.boundaries.push_back(t);
  std::reverse(seg.boundaries.begin(), seg.boundaries.end());
  return {std::move(seg), best[T]};
}

double bpc(double log_marginal, int T) {
  if (T < 1) throw DataError("bpc: T must be >= 1");
  return -log_marginal / (static_cast<double>(T) * std::log(2.0));
}

std::vector<char> gaps_to_bits(const std::vector<int>& gaps, int T) {
  std::vector<char> bits(T > 0 ? T - 1 : 0, 0);
  for (int g : gaps) {
    if (g < 1 || g > T - 1)
      throw DataError("gap index " + std::to_string(g) + " outside [1," +
                      std::to_string(T - 1) + "]");
    bits[g - 1] = 1;
  }
  return bits;
}

std::vector<int> bits_to_gaps(const std::vector<char>& bits) {
  std::vector<int> gaps;
  for (size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) gaps.push_back(static_cast<int>(i) + 1);
  return gaps;
}

}  // namespace seglm
