#pragma once

#include <cmath>
#include <vector>

#include "seglm/corpus.hpp"
#include "seglm/model.hpp"

// Plain serial re-implementation of the model forward pass, templated on the
// scalar type. Used as an independent comparator: in double it provides
// exact span-blindness checks and a quiet finite-difference baseline, in
// float it cross-checks the production path. Loop and accumulation order
// mirror the production kernels (reductions in double where they do it).

namespace seglm::ref {

template <typename Real>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<Real> v;
  Real& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  Real at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }
};

template <typename Real>
struct Params {
  struct Block {
    Mat<Real> wq, wk, wv, wo;
    std::vector<Real> bq, bk, bv, bo;
    std::vector<Real> ln1_g, ln1_b, ln2_g, ln2_b;
    Mat<Real> ff1_w, ff2_w;
    std::vector<Real> ff1_b, ff2_b;
  };
  Mat<Real> embed;
  std::vector<Block> fwd, bwd;
  Block comb;
  std::vector<Real> final_ln_g, final_ln_b;
  Mat<Real> dec_init_w;
  std::vector<Real> dec_init_b;
  Mat<Real> lstm_wx, lstm_wh;
  std::vector<Real> lstm_b;
  std::vector<Real> out_bias;

  // mutable views in the same order as MslmParams::all()
  std::vector<std::vector<Real>*> all();
};

namespace detail {

template <typename Real>
Mat<Real> to_mat(const Tensor& t) {
  Mat<Real> m;
  if (t.shape().size() == 2) {
    m.rows = t.shape()[0];
    m.cols = t.shape()[1];
  } else {
    m.rows = 1;
    m.cols = t.shape()[0];
  }
  m.v.assign(t.data(), t.data() + t.numel());
  return m;
}

template <typename Real>
std::vector<Real> to_vec(const Tensor& t) {
  return std::vector<Real>(t.data(), t.data() + t.numel());
}

template <typename Real>
typename Params<Real>::Block to_block(const BlockParams& b) {
  typename Params<Real>::Block r;
  r.wq = to_mat<Real>(b.wq);
  r.bq = to_vec<Real>(b.bq);
  r.wk = to_mat<Real>(b.wk);
  r.bk = to_vec<Real>(b.bk);
  r.wv = to_mat<Real>(b.wv);
  r.bv = to_vec<Real>(b.bv);
  r.wo = to_mat<Real>(b.wo);
  r.bo = to_vec<Real>(b.bo);
  r.ln1_g = to_vec<Real>(b.ln1_g);
  r.ln1_b = to_vec<Real>(b.ln1_b);
  r.ln2_g = to_vec<Real>(b.ln2_g);
  r.ln2_b = to_vec<Real>(b.ln2_b);
  r.ff1_w = to_mat<Real>(b.ff1_w);
  r.ff1_b = to_vec<Real>(b.ff1_b);
  r.ff2_w = to_mat<Real>(b.ff2_w);
  r.ff2_b = to_vec<Real>(b.ff2_b);
  return r;
}

constexpr double kMaskOff = -1e30;

// out[m,n] = a[m,k] @ b[k,n]
template <typename Real>
Mat<Real> matmul(const Mat<Real>& a, const Mat<Real>& b) {
  Mat<Real> c;
  c.rows = a.rows;
  c.cols = b.cols;
  c.v.assign(static_cast<size_t>(a.rows) * b.cols, Real(0));
  for (int i = 0; i < a.rows; ++i)
    for (int p = 0; p < a.cols; ++p) {
      const Real ap = a.at(i, p);
      for (int j = 0; j < b.cols; ++j) c.at(i, j) += ap * b.at(p, j);
    }
  return c;
}

template <typename Real>
void add_bias_inplace(Mat<Real>& x, const std::vector<Real>& b) {
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) x.at(i, j) += b[j];
}

template <typename Real>
Mat<Real> layer_norm(const Mat<Real>& x, const std::vector<Real>& g,
                     const std::vector<Real>& b, double eps = 1e-5) {
  Mat<Real> y;
  y.rows = x.rows;
  y.cols = x.cols;
  y.v.resize(x.v.size());
  for (int i = 0; i < x.rows; ++i) {
    double mu = 0.0;
    for (int j = 0; j < x.cols; ++j) mu += static_cast<double>(x.at(i, j));
    mu /= x.cols;
    double var = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      const double d = static_cast<double>(x.at(i, j)) - mu;
      var += d * d;
    }
    var /= x.cols;
    const double rs = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < x.cols; ++j)
      y.at(i, j) = static_cast<Real>((static_cast<double>(x.at(i, j)) - mu) * rs) *
                       g[j] +
                   b[j];
  }
  return y;
}

template <typename Real>
void softmax_row(Real* x, int n) {
  Real mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const double e = std::exp(static_cast<double>(x[j]) - static_cast<double>(mx));
    x[j] = static_cast<Real>(e);
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < n; ++j)
    x[j] = static_cast<Real>(static_cast<double>(x[j]) * inv);
}

template <typename Real>
void log_softmax_row(Real* x, int n) {
  Real mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j)
    sum += std::exp(static_cast<double>(x[j]) - static_cast<double>(mx));
  const double lse = static_cast<double>(mx) + std::log(sum);
  for (int j = 0; j < n; ++j)
    x[j] = static_cast<Real>(static_cast<double>(x[j]) - lse);
}

// One pre-norm block; bias[mq, mk] additive attention mask.
template <typename Real>
Mat<Real> block(const typename Params<Real>::Block& bp, const Mat<Real>& x,
                const Mat<Real>& kv, const std::vector<Real>& attn_bias,
                int heads, bool self_attn) {
  const int d = x.cols;
  const int dh = d / heads;
  Mat<Real> q_in = layer_norm(x, bp.ln1_g, bp.ln1_b);
  Mat<Real> kv_in = self_attn ? q_in : layer_norm(kv, bp.ln1_g, bp.ln1_b);
  Mat<Real> Q = matmul(q_in, bp.wq);
  add_bias_inplace(Q, bp.bq);
  Mat<Real> K = matmul(kv_in, bp.wk);
  add_bias_inplace(K, bp.bk);
  Mat<Real> V = matmul(kv_in, bp.wv);
  add_bias_inplace(V, bp.bv);
  const int mq = x.rows, mk = kv_in.rows;
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  Mat<Real> ctx;
  ctx.rows = mq;
  ctx.cols = d;
  ctx.v.assign(static_cast<size_t>(mq) * d, Real(0));
  std::vector<Real> row(mk);
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh;
    for (int q = 0; q < mq; ++q) {
      for (int s = 0; s < mk; ++s) {
        Real acc = Real(0);
        for (int j = 0; j < dh; ++j) acc += Q.at(q, c0 + j) * K.at(s, c0 + j);
        row[s] = acc * inv_sqrt + attn_bias[static_cast<size_t>(q) * mk + s];
      }
      softmax_row(row.data(), mk);
      for (int j = 0; j < dh; ++j) {
        Real acc = Real(0);
        for (int s = 0; s < mk; ++s) acc += row[s] * V.at(s, c0 + j);
        ctx.at(q, c0 + j) = acc;
      }
    }
  }
  Mat<Real> proj = matmul(ctx, bp.wo);
  add_bias_inplace(proj, bp.bo);
  Mat<Real> y = x;
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += proj.v[i];
  Mat<Real> f_in = layer_norm(y, bp.ln2_g, bp.ln2_b);
  Mat<Real> f1 = matmul(f_in, bp.ff1_w);
  add_bias_inplace(f1, bp.ff1_b);
  for (auto& v : f1.v) v = v > Real(0) ? v : Real(0);
  Mat<Real> f2 = matmul(f1, bp.ff2_w);
  add_bias_inplace(f2, bp.ff2_b);
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += f2.v[i];
  return y;
}

template <typename Real>
std::vector<Real> attn_bias_causal(int T) {
  std::vector<Real> m(static_cast<size_t>(T) * T, Real(kMaskOff));
  for (int q = 0; q < T; ++q)
    for (int s = 0; s <= q; ++s) m[static_cast<size_t>(q) * T + s] = Real(0);
  return m;
}

template <typename Real>
std::vector<Real> attn_bias_anticausal(int T) {
  std::vector<Real> m(static_cast<size_t>(T) * T, Real(kMaskOff));
  for (int q = 0; q < T; ++q)
    for (int s = q; s < T; ++s) m[static_cast<size_t>(q) * T + s] = Real(0);
  return m;
}

template <typename Real>
std::vector<Real> attn_bias_combiner(int T, int k) {
  auto vis = build_segmental_mask(T, k);
  std::vector<Real> m(static_cast<size_t>(T) * 2 * T, Real(kMaskOff));
  for (int q = 0; q < T; ++q)
    for (int s = 0; s < T; ++s) {
      if (!vis[static_cast<size_t>(q) * T + s]) continue;
      if (s <= q)
        m[static_cast<size_t>(q) * 2 * T + s] = Real(0);
      else
        m[static_cast<size_t>(q) * 2 * T + T + s] = Real(0);
    }
  return m;
}

}  // namespace detail

template <typename Real>
std::vector<std::vector<Real>*> Params<Real>::all() {
  std::vector<std::vector<Real>*> out;
  auto put_block = [&](Block& b) {
    out.push_back(&b.wq.v);
    out.push_back(&b.bq);
    out.push_back(&b.wk.v);
    out.push_back(&b.bk);
    out.push_back(&b.wv.v);
    out.push_back(&b.bv);
    out.push_back(&b.wo.v);
    out.push_back(&b.bo);
    out.push_back(&b.ln1_g);
    out.push_back(&b.ln1_b);
    out.push_back(&b.ln2_g);
    out.push_back(&b.ln2_b);
    out.push_back(&b.ff1_w.v);
    out.push_back(&b.ff1_b);
    out.push_back(&b.ff2_w.v);
    out.push_back(&b.ff2_b);
  };
  out.push_back(&embed.v);
  for (auto& b : fwd) put_block(b);
  for (auto& b : bwd) put_block(b);
  put_block(comb);
  out.push_back(&final_ln_g);
  out.push_back(&final_ln_b);
  out.push_back(&dec_init_w.v);
  out.push_back(&dec_init_b);
  out.push_back(&lstm_wx.v);
  out.push_back(&lstm_wh.v);
  out.push_back(&lstm_b);
  out.push_back(&out_bias);
  return out;
}

template <typename Real>
Params<Real> from_params(const MslmParams& p) {
  using detail::to_block;
  using detail::to_mat;
  using detail::to_vec;
  Params<Real> r;
  r.embed = to_mat<Real>(p.embed);
  for (const auto& b : p.fwd_blocks) r.fwd.push_back(to_block<Real>(b));
  for (const auto& b : p.bwd_blocks) r.bwd.push_back(to_block<Real>(b));
  r.comb = to_block<Real>(p.combiner);
  r.final_ln_g = to_vec<Real>(p.final_ln_g);
  r.final_ln_b = to_vec<Real>(p.final_ln_b);
  r.dec_init_w = to_mat<Real>(p.dec_init_w);
  r.dec_init_b = to_vec<Real>(p.dec_init_b);
  r.lstm_wx = to_mat<Real>(p.lstm_wx);
  r.lstm_wh = to_mat<Real>(p.lstm_wh);
  r.lstm_b = to_vec<Real>(p.lstm_b);
  r.out_bias = to_vec<Real>(p.out_bias);
  return r;
}

// Hidden states [(T+1) x d], dropout off.
template <typename Real>
Mat<Real> encode(const Params<Real>& p, const ModelConfig& cfg,
                 const std::vector<int>& ids) {
  using namespace detail;
  const int T = static_cast<int>(ids.size());
  const int Tp = T + 1;
  const int d = cfg.d_model;
  Mat<Real> x;
  x.rows = Tp;
  x.cols = d;
  x.v.resize(static_cast<size_t>(Tp) * d);
  const Real s = std::sqrt(static_cast<Real>(d));
  std::vector<int> in_ids(1, CharVocab::kBos);
  in_ids.insert(in_ids.end(), ids.begin(), ids.end());
  for (int i = 0; i < Tp; ++i)
    for (int j = 0; j < d; ++j)
      x.at(i, j) = p.embed.at(in_ids[i], j) * s;
  for (int pos = 0; pos < Tp; ++pos)
    for (int j = 0; j < d; j += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(j) / d);
      x.at(pos, j) += static_cast<Real>(std::sin(pos * freq));
      if (j + 1 < d) x.at(pos, j + 1) += static_cast<Real>(std::cos(pos * freq));
    }
  auto cb = attn_bias_causal<Real>(Tp);
  auto ab = attn_bias_anticausal<Real>(Tp);
  Mat<Real> xf = x, xb = x;
  for (const auto& b : p.fwd) xf = block<Real>(b, xf, xf, cb, cfg.heads, true);
  for (const auto& b : p.bwd) xb = block<Real>(b, xb, xb, ab, cfg.heads, true);
  Mat<Real> kv;
  kv.rows = 2 * Tp;
  kv.cols = d;
  kv.v = xf.v;
  kv.v.insert(kv.v.end(), xb.v.begin(), xb.v.end());
  Mat<Real> h = block<Real>(p.comb, xf, kv,
                            attn_bias_combiner<Real>(Tp, cfg.max_seg_len),
                            cfg.heads, false);
  return layer_norm(h, p.final_ln_g, p.final_ln_b);
}

// Edge log-probabilities for one line; edges[i][l-1], l <= min(k, T-i).
template <typename Real>
std::vector<std::vector<Real>> edge_scores(const Params<Real>& p,
                                           const ModelConfig& cfg,
                                           const Mat<Real>& h,
                                           const std::vector<int>& ids,
                                           int k_lattice) {
  using namespace detail;
  const int T = static_cast<int>(ids.size());
  const int d = cfg.d_model;
  const int V = cfg.vocab_size;
  std::vector<Real> allow(V, Real(0));
  allow[CharVocab::kPad] = Real(kMaskOff);
  allow[CharVocab::kBos] = Real(kMaskOff);
  allow[CharVocab::kEos] = Real(kMaskOff);
  allow[CharVocab::kSegStart] = Real(kMaskOff);

  std::vector<std::vector<Real>> edges(T);
  std::vector<Real> hs(d), cs(d), gates(4 * d), logits(V);
  for (int i = 0; i < T; ++i) {
    const int K = std::min(k_lattice, T - i);
    edges[i].assign(K, Real(0));
    // init state: affine projection of h[i]
    for (int j = 0; j < 2 * d; ++j) {
      Real acc = Real(0);
      for (int q = 0; q < d; ++q) acc += h.at(i, q) * p.dec_init_w.at(q, j);
      Real v = acc + p.dec_init_b[j];
      if (j < d)
        hs[j] = v;
      else
        cs[j - d] = v;
    }
    Real prefix = Real(0);
    for (int s = 0; s <= K; ++s) {
      const int in_id =
          s == 0 ? CharVocab::kSegStart
                 : (i + s <= T ? ids[i + s - 1] : CharVocab::kPad);
      for (int j = 0; j < 4 * d; ++j) {
        Real a = Real(0);
        for (int q = 0; q < d; ++q)
          a += p.embed.at(in_id, q) * p.lstm_wx.at(q, j);
        Real b2 = Real(0);
        for (int q = 0; q < d; ++q) b2 += hs[q] * p.lstm_wh.at(q, j);
        gates[j] = (a + b2) + p.lstm_b[j];
      }
      for (int j = 0; j < d; ++j) {
        const Real ig = Real(1) / (Real(1) + std::exp(-gates[j]));
        const Real fg = Real(1) / (Real(1) + std::exp(-gates[d + j]));
        const Real gg = std::tanh(gates[2 * d + j]);
        const Real og = Real(1) / (Real(1) + std::exp(-gates[3 * d + j]));
        cs[j] = fg * cs[j] + ig * gg;
        hs[j] = og * std::tanh(cs[j]);
      }
      for (int v = 0; v < V; ++v) {
        Real acc = Real(0);
        for (int q = 0; q < d; ++q) acc += hs[q] * p.embed.at(v, q);
        logits[v] = (acc + p.out_bias[v]) + allow[v];
      }
      log_softmax_row(logits.data(), V);
      if (s >= 1) edges[i][s - 1] = prefix + logits[CharVocab::kSegEnd];
      if (s < K) prefix = (s == 0) ? logits[ids[i + s]] : prefix + logits[ids[i + s]];
    }
  }
  return edges;
}

// Mean over lines of -log marginal (forward recursion in double).
template <typename Real>
double nll(const Params<Real>& p, const ModelConfig& cfg,
           const std::vector<const EncodedLine*>& batch) {
  double total = 0.0;
  for (const auto* line : batch) {
    const int T = static_cast<int>(line->ids.size());
    const int k = std::min(cfg.max_seg_len, T);
    Mat<Real> h = encode(p, cfg, line->ids);
    auto edges = edge_scores(p, cfg, h, line->ids, k);
    std::vector<double> alpha(T + 1, 0.0);
    std::vector<double> terms;
    for (int t = 1; t <= T; ++t) {
      terms.clear();
      for (int j = std::max(0, t - k); j <= t - 1; ++j)
        terms.push_back(alpha[j] + static_cast<double>(edges[j][t - j - 1]));
      double mx = terms[0];
      for (double v : terms) mx = std::max(mx, v);
      double sum = 0.0;
      for (double v : terms) sum += std::exp(v - mx);
      alpha[t] = mx + std::log(sum);
    }
    total += alpha[T];
  }
  const Real tot = static_cast<Real>(total);
  return static_cast<double>(tot * static_cast<Real>(-1.0 / batch.size()));
}

}  // namespace seglm::ref
