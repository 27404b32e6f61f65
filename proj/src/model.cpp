#include "seglm/model.hpp"

#include <algorithm>
#include <cmath>

#include "seglm/text.hpp"

namespace seglm {

namespace {

constexpr float kMaskOff = -1e30f;

Tensor xavier(int fan_in, int fan_out, std::vector<int> shape, Rng& rng) {
  const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  size_t n = 1;
  for (int s : shape) n *= static_cast<size_t>(s);
  std::vector<float> data(n);
  for (auto& v : data) v = static_cast<float>(rng.uniform(-a, a));
  return Tensor::from(std::move(shape), std::move(data));
}

BlockParams init_block(int d, int ff, Rng& rng) {
  BlockParams b;
  b.wq = xavier(d, d, {d, d}, rng);
  b.bq = Tensor::zeros({d});
  b.wk = xavier(d, d, {d, d}, rng);
  b.bk = Tensor::zeros({d});
  b.wv = xavier(d, d, {d, d}, rng);
  b.bv = Tensor::zeros({d});
  b.wo = xavier(d, d, {d, d}, rng);
  b.bo = Tensor::zeros({d});
  b.ln1_g = Tensor::full({d}, 1.0f);
  b.ln1_b = Tensor::zeros({d});
  b.ln2_g = Tensor::full({d}, 1.0f);
  b.ln2_b = Tensor::zeros({d});
  b.ff1_w = xavier(d, ff, {d, ff}, rng);
  b.ff1_b = Tensor::zeros({ff});
  b.ff2_w = xavier(ff, d, {ff, d}, rng);
  b.ff2_b = Tensor::zeros({d});
  return b;
}

void push_block(const BlockParams& b, const std::string& prefix,
                std::vector<Tensor>* ts, std::vector<std::string>* ns) {
  auto put = [&](const Tensor& t, const char* name) {
    ts->push_back(t);
    if (ns) ns->push_back(prefix + name);
  };
  put(b.wq, "wq"); put(b.bq, "bq"); put(b.wk, "wk"); put(b.bk, "bk");
  put(b.wv, "wv"); put(b.bv, "bv"); put(b.wo, "wo"); put(b.bo, "bo");
  put(b.ln1_g, "ln1_g"); put(b.ln1_b, "ln1_b");
  put(b.ln2_g, "ln2_g"); put(b.ln2_b, "ln2_b");
  put(b.ff1_w, "ff1_w"); put(b.ff1_b, "ff1_b");
  put(b.ff2_w, "ff2_w"); put(b.ff2_b, "ff2_b");
}

void collect(const MslmParams& p, std::vector<Tensor>* ts,
             std::vector<std::string>* ns) {
  auto put = [&](const Tensor& t, const char* name) {
    ts->push_back(t);
    if (ns) ns->push_back(name);
  };
  put(p.embed, "embed");
  for (size_t i = 0; i < p.fwd_blocks.size(); ++i)
    push_block(p.fwd_blocks[i], "fwd" + std::to_string(i) + ".", ts, ns);
  for (size_t i = 0; i < p.bwd_blocks.size(); ++i)
    push_block(p.bwd_blocks[i], "bwd" + std::to_string(i) + ".", ts, ns);
  push_block(p.combiner, "comb.", ts, ns);
  put(p.final_ln_g, "final_ln_g");
  put(p.final_ln_b, "final_ln_b");
  put(p.dec_init_w, "dec_init_w");
  put(p.dec_init_b, "dec_init_b");
  put(p.lstm_wx, "lstm_wx");
  put(p.lstm_wh, "lstm_wh");
  put(p.lstm_b, "lstm_b");
  put(p.out_bias, "out_bias");
}

}  // namespace

void ModelConfig::validate() const {
  if (layers < 1) throw DataError("model: layers must be >= 1");
  if (d_model < 1 || d_ff < 1) throw DataError("model: bad hidden sizes");
  if (heads < 1 || d_model % heads != 0)
    throw DataError("model: d_model " + std::to_string(d_model) +
                    " not divisible by heads " + std::to_string(heads));
  if (max_seg_len < 1) throw DataError("model: max_seg_len must be >= 1");
  if (vocab_size < CharVocab::kNumSpecials + 1)
    throw DataError("model: vocab_size too small");
  for (float r : {dropout_embed, dropout_encoder, dropout_decoder_in})
    if (r < 0.0f || r >= 1.0f)
      throw DataError("model: dropout rate outside [0,1)");
}

std::vector<Tensor> MslmParams::all() const {
  std::vector<Tensor> ts;
  collect(*this, &ts, nullptr);
  return ts;
}

std::vector<std::string> MslmParams::names() const {
  std::vector<Tensor> ts;
  std::vector<std::string> ns;
  collect(*this, &ts, &ns);
  return ns;
}

void MslmParams::set_requires_grad(bool v) {
  for (auto& t : all()) t.set_requires_grad(v);
}

size_t MslmParams::param_count() const {
  size_t n = 0;
  for (const auto& t : all()) n += t.numel();
  return n;
}

MslmParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.d_model, V = cfg.vocab_size;
  MslmParams p;
  {
    const float sd = 1.0f / std::sqrt(static_cast<float>(d));
    std::vector<float> e(static_cast<size_t>(V) * d);
    for (auto& v : e) v = static_cast<float>(rng.normal(0.0, sd));
    p.embed = Tensor::from({V, d}, std::move(e));
  }
  for (int i = 0; i < cfg.layers; ++i)
    p.fwd_blocks.push_back(init_block(d, cfg.d_ff, rng));
  for (int i = 0; i < cfg.layers; ++i)
    p.bwd_blocks.push_back(init_block(d, cfg.d_ff, rng));
  p.combiner = init_block(d, cfg.d_ff, rng);
  p.final_ln_g = Tensor::full({d}, 1.0f);
  p.final_ln_b = Tensor::zeros({d});
  p.dec_init_w = xavier(d, 2 * d, {d, 2 * d}, rng);
  p.dec_init_b = Tensor::zeros({2 * d});
  p.lstm_wx = xavier(d, 4 * d, {d, 4 * d}, rng);
  p.lstm_wh = xavier(d, 4 * d, {d, 4 * d}, rng);
  {
    // forget-gate bias starts open
    std::vector<float> b(static_cast<size_t>(4) * d, 0.0f);
    for (int j = d; j < 2 * d; ++j) b[j] = 1.0f;
    p.lstm_b = Tensor::from({4 * d}, std::move(b));
  }
  p.out_bias = Tensor::zeros({V});
  p.set_requires_grad(true);
  return p;
}

std::vector<char> build_segmental_mask(int T_padded, int k) {
  if (T_padded < 1 || k < 1)
    throw DataError("build_segmental_mask: T and k must be >= 1");
  std::vector<char> m(static_cast<size_t>(T_padded) * T_padded, 0);
  for (int q = 0; q < T_padded; ++q)
    for (int s = 0; s < T_padded; ++s)
      if (s <= q || s >= q + k + 1)
        m[static_cast<size_t>(q) * T_padded + s] = 1;
  return m;
}

namespace {

Tensor causal_bias(int T) {
  std::vector<float> m(static_cast<size_t>(T) * T, kMaskOff);
  for (int q = 0; q < T; ++q)
    for (int s = 0; s <= q; ++s) m[static_cast<size_t>(q) * T + s] = 0.0f;
  return Tensor::from({T, T}, std::move(m));
}

Tensor anticausal_bias(int T) {
  std::vector<float> m(static_cast<size_t>(T) * T, kMaskOff);
  for (int q = 0; q < T; ++q)
    for (int s = q; s < T; ++s) m[static_cast<size_t>(q) * T + s] = 0.0f;
  return Tensor::from({T, T}, std::move(m));
}

// [T, 2T]: causal-stack keys on the left, anti-causal keys on the right,
// visibility split exactly along the two disjuncts of the segmental rule.
Tensor combiner_bias(int T, int k) {
  auto vis = build_segmental_mask(T, k);
  std::vector<float> m(static_cast<size_t>(T) * 2 * T, kMaskOff);
  for (int q = 0; q < T; ++q)
    for (int s = 0; s < T; ++s) {
      if (!vis[static_cast<size_t>(q) * T + s]) continue;
      if (s <= q)
        m[static_cast<size_t>(q) * 2 * T + s] = 0.0f;
      else
        m[static_cast<size_t>(q) * 2 * T + T + s] = 0.0f;
    }
  return Tensor::from({T, 2 * T}, std::move(m));
}

Tensor sinusoid_table(int T, int d) {
  std::vector<float> pe(static_cast<size_t>(T) * d);
  for (int pos = 0; pos < T; ++pos) {
    for (int j = 0; j < d; j += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(j) / d);
      pe[static_cast<size_t>(pos) * d + j] =
          static_cast<float>(std::sin(pos * freq));
      if (j + 1 < d)
        pe[static_cast<size_t>(pos) * d + j + 1] =
            static_cast<float>(std::cos(pos * freq));
    }
  }
  return Tensor::from({T, d}, std::move(pe));
}

// Pre-norm block. For self-attention pass kv = x. The combiner passes the
// concatenated stream states; both query and key inputs go through ln1.
Tensor block_forward(const BlockParams& bp, const Tensor& x, const Tensor& kv,
                     const Tensor& attn_bias, const ModelConfig& cfg,
                     DropoutPlan* drop) {
  const int d = cfg.d_model;
  const int dh = d / cfg.heads;
  const bool self_attn = kv.node() == x.node();
  Tensor q_in = layer_norm(x, bp.ln1_g, bp.ln1_b);
  Tensor kv_in = self_attn ? q_in : layer_norm(kv, bp.ln1_g, bp.ln1_b);
  Tensor Q = add_bias(matmul(q_in, bp.wq), bp.bq);
  Tensor K = add_bias(matmul(kv_in, bp.wk), bp.bk);
  Tensor V = add_bias(matmul(kv_in, bp.wv), bp.bv);
  std::vector<Tensor> heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  for (int h = 0; h < cfg.heads; ++h) {
    Tensor Qh = slice_cols(Q, h * dh, dh);
    Tensor Kh = slice_cols(K, h * dh, dh);
    Tensor Vh = slice_cols(V, h * dh, dh);
    Tensor scores = scale(matmul(Qh, Kh, true), inv_sqrt);
    Tensor probs = softmax_rows(add(scores, attn_bias));
    heads.push_back(matmul(probs, Vh));
  }
  Tensor ctx = add_bias(matmul(concat_cols(heads), bp.wo), bp.bo);
  if (drop && drop->enabled)
    ctx = dropout(ctx, cfg.dropout_encoder, drop->next());
  Tensor y = add(x, ctx);
  Tensor f_in = layer_norm(y, bp.ln2_g, bp.ln2_b);
  Tensor f = add_bias(
      matmul(relu_t(add_bias(matmul(f_in, bp.ff1_w), bp.ff1_b)), bp.ff2_w),
      bp.ff2_b);
  if (drop && drop->enabled)
    f = dropout(f, cfg.dropout_encoder, drop->next());
  return add(y, f);
}

}  // namespace

Tensor encode(const MslmParams& params, const ModelConfig& cfg,
              const std::vector<int>& char_ids, DropoutPlan* drop) {
  const int T = static_cast<int>(char_ids.size());
  if (T < 1) throw DataError("encode: empty sequence");
  if (T > cfg.max_len)
    throw DataError("encode: sequence of " + std::to_string(T) +
                    " characters exceeds max length " +
                    std::to_string(cfg.max_len));
  const int Tp = T + 1;
  const int d = cfg.d_model;
  std::vector<int> in_ids;
  in_ids.reserve(Tp);
  in_ids.push_back(CharVocab::kBos);
  in_ids.insert(in_ids.end(), char_ids.begin(), char_ids.end());

  Tensor x = add(scale(embedding(params.embed, in_ids),
                       std::sqrt(static_cast<float>(d))),
                 sinusoid_table(Tp, d));
  if (drop && drop->enabled)
    x = dropout(x, cfg.dropout_embed, drop->next());

  Tensor cb = causal_bias(Tp);
  Tensor ab = anticausal_bias(Tp);
  Tensor xf = x, xb = x;
  for (const auto& bp : params.fwd_blocks)
    xf = block_forward(bp, xf, xf, cb, cfg, drop);
  for (const auto& bp : params.bwd_blocks)
    xb = block_forward(bp, xb, xb, ab, cfg, drop);

  Tensor kv = concat_rows({xf, xb});
  Tensor h = block_forward(params.combiner, xf, kv,
                           combiner_bias(Tp, cfg.max_seg_len), cfg, drop);
  return layer_norm(h, params.final_ln_g, params.final_ln_b);
}

namespace {

struct RowSpec {
  const std::vector<int>* ids;  // the line's character ids
  int start;                    // segment start index i (0-based)
};

// LSTM rollout scoring all segments for each row. Returns per-length column
// vectors E_l of edge log-probabilities, l = 1..k_eff, each of shape [R].
std::vector<Tensor> decode_edge_cols(const MslmParams& p,
                                     const ModelConfig& cfg, const Tensor& H,
                                     const std::vector<RowSpec>& rows,
                                     int k_eff, DropoutPlan* drop) {
  const int d = cfg.d_model;
  const int V = cfg.vocab_size;
  const int R = static_cast<int>(rows.size());

  Tensor Hd = (drop && drop->enabled)
                  ? dropout(H, cfg.dropout_decoder_in, drop->next())
                  : H;
  Tensor proj = add_bias(matmul(Hd, p.dec_init_w), p.dec_init_b);
  Tensor h = slice_cols(proj, 0, d);
  Tensor c = slice_cols(proj, d, d);

  // output distribution covers characters plus <unk> and <seg-end>
  std::vector<float> allow(V, 0.0f);
  allow[CharVocab::kPad] = kMaskOff;
  allow[CharVocab::kBos] = kMaskOff;
  allow[CharVocab::kEos] = kMaskOff;
  allow[CharVocab::kSegStart] = kMaskOff;
  Tensor allow_t = Tensor::from({V}, std::move(allow));

  std::vector<Tensor> cols(k_eff);
  Tensor prefix;
  const std::vector<int> segend_ids(R, CharVocab::kSegEnd);
  for (int s = 0; s <= k_eff; ++s) {
    std::vector<int> in_ids(R);
    for (int r = 0; r < R; ++r) {
      if (s == 0) {
        in_ids[r] = CharVocab::kSegStart;
      } else {
        const auto& ids = *rows[r].ids;
        const int pos = rows[r].start + s;  // 1-based char index fed this step
        in_ids[r] = pos <= static_cast<int>(ids.size()) ? ids[pos - 1]
                                                        : CharVocab::kPad;
      }
    }
    Tensor emb = embedding(p.embed, in_ids);
    if (s == 0 && drop && drop->enabled)
      emb = dropout(emb, cfg.dropout_decoder_in, drop->next());
    Tensor gates =
        add_bias(add(matmul(emb, p.lstm_wx), matmul(h, p.lstm_wh)), p.lstm_b);
    Tensor i_g = sigmoid_t(slice_cols(gates, 0, d));
    Tensor f_g = sigmoid_t(slice_cols(gates, d, d));
    Tensor g_g = tanh_t(slice_cols(gates, 2 * d, d));
    Tensor o_g = sigmoid_t(slice_cols(gates, 3 * d, d));
    c = add(mul(f_g, c), mul(i_g, g_g));
    h = mul(o_g, tanh_t(c));
    Tensor logits =
        add_bias(add_bias(matmul(h, p.embed, true), p.out_bias), allow_t);
    Tensor L = log_softmax_rows(logits);
    if (s >= 1)
      cols[s - 1] = add(prefix, gather_cols(L, segend_ids));
    if (s < k_eff) {
      std::vector<int> targets(R);
      for (int r = 0; r < R; ++r) {
        const auto& ids = *rows[r].ids;
        const int pos = rows[r].start + s + 1;  // char predicted this step
        targets[r] = pos <= static_cast<int>(ids.size()) ? ids[pos - 1]
                                                         : CharVocab::kPad;
      }
      Tensor pick = gather_cols(L, targets);
      prefix = (s == 0) ? pick : add(prefix, pick);
    }
  }
  return cols;
}

}  // namespace

EdgeLattice score_edges(const MslmParams& params, const ModelConfig& cfg,
                        const Tensor& h, const std::vector<int>& char_ids,
                        int k_override) {
  NoGradGuard ng;
  const int T = static_cast<int>(char_ids.size());
  if (T < 1) throw DataError("score_edges: empty sequence");
  if (h.rows() != T + 1 || h.cols() != cfg.d_model)
    throw ShapeError("score_edges: states " + shape_str(h.shape()) +
                     " do not match a " + std::to_string(T) +
                     "-character line");
  const int k_req = k_override > 0 ? k_override : cfg.max_seg_len;
  const int k = std::min(k_req, T);
  Tensor H = slice_rows(h, 0, T);
  std::vector<RowSpec> rows;
  rows.reserve(T);
  for (int i = 0; i < T; ++i) rows.push_back({&char_ids, i});
  auto cols = decode_edge_cols(params, cfg, H, rows, k, nullptr);

  EdgeLattice lat;
  lat.T = T;
  lat.k = k;
  lat.edge_logp.resize(T);
  for (int i = 0; i < T; ++i) {
    const int kl = std::min(k, T - i);
    lat.edge_logp[i].resize(kl);
    for (int l = 1; l <= kl; ++l) {
      const double v = cols[l - 1].data()[i];
      if (v > 1e-4)
        throw DataError("score_edges: positive segment log-probability");
      lat.edge_logp[i][l - 1] = v;
    }
  }
  return lat;
}

Tensor nll_loss(const MslmParams& params, const ModelConfig& cfg,
                const std::vector<const EncodedLine*>& batch,
                DropoutPlan* drop, std::vector<double>* line_logz) {
  if (batch.empty()) throw DataError("nll_loss: empty batch");
  int max_T = 0;
  for (const auto* line : batch) {
    if (!line || line->ids.empty())
      throw DataError("nll_loss: empty line in batch");
    max_T = std::max(max_T, static_cast<int>(line->ids.size()));
  }
  std::vector<Tensor> starts;
  std::vector<RowSpec> rows;
  for (const auto* line : batch) {
    const int T = static_cast<int>(line->ids.size());
    Tensor h = encode(params, cfg, line->ids, drop);
    starts.push_back(slice_rows(h, 0, T));
    for (int i = 0; i < T; ++i) rows.push_back({&line->ids, i});
  }
  Tensor H = concat_rows(starts);
  const int k_eff = std::min(cfg.max_seg_len, max_T);
  auto cols = decode_edge_cols(params, cfg, H, rows, k_eff, drop);

  std::vector<Tensor> logzs;
  int offset = 0;
  for (const auto* line : batch) {
    const int T = static_cast<int>(line->ids.size());
    const int kl = std::min(cfg.max_seg_len, T);
    std::vector<Tensor> parts;
    parts.reserve(kl);
    for (int l = 1; l <= kl; ++l)
      parts.push_back(slice_rows(cols[l - 1], offset, T));
    Tensor edges = concat_cols(parts);
    Tensor lz = lattice_log_marginal(edges, T, kl);
    if (line_logz) line_logz->push_back(lz.item());
    logzs.push_back(lz);
    offset += T;
  }
  return scale(sum_all(concat_rows(logzs)),
               -1.0f / static_cast<float>(batch.size()));
}

Segmentation segment_ids(const MslmParams& params, const ModelConfig& cfg,
                         const std::vector<int>& char_ids) {
  NoGradGuard ng;
  Tensor h = encode(params, cfg, char_ids);
  EdgeLattice lat = score_edges(params, cfg, h, char_ids);
  return viterbi(lat).first;
}

std::string segment_line(const MslmParams& params, const ModelConfig& cfg,
                         const CharVocab& vocab, std::string_view line) {
  auto cps = nfc(utf8_decode(line));
  std::vector<char32_t> stripped;
  std::vector<int> ids;
  for (char32_t cp : cps) {
    if (is_space(cp)) continue;
    stripped.push_back(cp);
    ids.push_back(vocab.encode(cp));
  }
  if (ids.empty()) throw DataError("segment_line: line is empty");
  Segmentation seg = segment_ids(params, cfg, ids);
  std::string out;
  size_t b = 0;
  for (size_t i = 0; i < stripped.size(); ++i) {
    out += utf8_encode(stripped[i]);
    const int gap = static_cast<int>(i) + 1;
    if (b < seg.boundaries.size() && seg.boundaries[b] == gap) {
      ++b;
      if (i + 1 < stripped.size()) out += ' ';
    }
  }
  return out;
}

}  // namespace seglm
