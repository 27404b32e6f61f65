#pragma once

// Brute-force reference computations the tests compare against. Everything
// here is deliberately naive: exhaustive enumeration and simple recurrences,
// no shared code with the library's own algorithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <utility>
#include <vector>

#include "seglm/common.hpp"
#include "seglm/lattice.hpp"

namespace oracle {

// Every way to cut T characters into segments of length <= k, as lists of
// cumulative end positions (the last entry is always T).
inline std::vector<std::vector<int>> enumerate_paths(int T, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int pos) {
    if (pos == T) {
      out.push_back(cur);
      return;
    }
    for (int l = 1; l <= std::min(k, T - pos); ++l) {
      cur.push_back(pos + l);
      rec(pos + l);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

inline int64_t count_paths(int T, int k) {
  std::vector<int64_t> c(T + 1, 0);
  c[0] = 1;
  for (int t = 1; t <= T; ++t)
    for (int l = 1; l <= std::min(k, t); ++l) c[t] += c[t - l];
  return c[T];
}

// Sum of edge scores along one path, left to right, in the same association
// order the lattice recursions use — so score ties are bit-detectable.
inline double path_score(const seglm::EdgeLattice& lat,
                         const std::vector<int>& ends) {
  double s = 0.0;
  int start = 0;
  for (int e : ends) {
    s += lat.edge(start, e - start);
    start = e;
  }
  return s;
}

inline double brute_marginal(const seglm::EdgeLattice& lat) {
  const auto paths = enumerate_paths(lat.T, lat.k);
  double mx = -1e300;
  std::vector<double> scores;
  scores.reserve(paths.size());
  for (const auto& p : paths) {
    scores.push_back(path_score(lat, p));
    mx = std::max(mx, scores.back());
  }
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  return mx + std::log(sum);
}

// Right-to-left lexicographic comparison of segment lengths: the ordering
// used to resolve equal-score paths (shortest final segment wins, then the
// one before it, and so on).
inline bool rtl_lengths_less(const std::vector<int>& a,
                             const std::vector<int>& b) {
  auto lengths = [](const std::vector<int>& ends) {
    std::vector<int> ls;
    int start = 0;
    for (int e : ends) {
      ls.push_back(e - start);
      start = e;
    }
    std::reverse(ls.begin(), ls.end());
    return ls;
  };
  return lengths(a) < lengths(b);
}

inline std::pair<std::vector<int>, double> brute_viterbi(
    const seglm::EdgeLattice& lat) {
  const auto paths = enumerate_paths(lat.T, lat.k);
  std::vector<int> best;
  double best_score = -1e300;
  bool first = true;
  for (const auto& p : paths) {
    const double s = path_score(lat, p);
    if (first || s > best_score ||
        (s == best_score && rtl_lengths_less(p, best))) {
      best = p;
      best_score = s;
      first = false;
    }
  }
  return {best, best_score};
}

inline seglm::EdgeLattice random_lattice(int T, int k, seglm::Rng& rng,
                                         double lo = -6.0, double hi = 0.0) {
  seglm::EdgeLattice lat;
  lat.T = T;
  lat.k = k;
  lat.edge_logp.resize(T);
  for (int i = 0; i < T; ++i) {
    const int kl = std::min(k, T - i);
    lat.edge_logp[i].resize(kl);
    for (int l = 0; l < kl; ++l) lat.edge_logp[i][l] = rng.uniform(lo, hi);
  }
  return lat;
}

// Exact-span scoring by explicit (line, start, end) triple intersection.
struct BruteSpanCounts {
  int64_t correct = 0, pred = 0, gold = 0;
};

inline BruteSpanCounts brute_spans(
    const std::vector<std::vector<int>>& pred_ends,
    const std::vector<std::vector<int>>& gold_ends) {
  BruteSpanCounts c;
  std::set<std::tuple<int, int, int>> pset, gset;
  for (size_t li = 0; li < pred_ends.size(); ++li) {
    int start = 0;
    for (int e : pred_ends[li]) {
      pset.insert({static_cast<int>(li), start, e});
      start = e;
    }
    start = 0;
    for (int e : gold_ends[li]) {
      gset.insert({static_cast<int>(li), start, e});
      start = e;
    }
  }
  c.pred = static_cast<int64_t>(pset.size());
  c.gold = static_cast<int64_t>(gset.size());
  for (const auto& t : pset) c.correct += gset.count(t);
  return c;
}

}  // namespace oracle
