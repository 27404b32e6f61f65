#include "seglm/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "seglm/eval.hpp"
#include "seglm/lattice.hpp"

namespace seglm {

void TrainConfig::validate() const {
  if (steps < 1) throw DataError("train: steps must be >= 1");
  if (warmup_steps < 1 || warmup_steps > steps)
    throw DataError("train: warmup_steps must be in [1, steps]");
  if (!(peak_lr > 0.0)) throw DataError("train: peak_lr must be positive");
  for (float r : {encoder_dropout, other_dropout})
    if (r < 0.0f || r >= 1.0f)
      throw DataError("train: dropout rate outside [0,1)");
  if (batch_size < 1) throw DataError("train: batch_size must be >= 1");
  if (checkpoint_every < 1)
    throw DataError("train: checkpoint_every must be >= 1");
}

double lr_at(const TrainConfig& cfg, int step) {
  if (step < 0 || step > cfg.steps)
    throw DataError("lr_at: step " + std::to_string(step) +
                    " outside [0, " + std::to_string(cfg.steps) + "]");
  if (step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) /
           static_cast<double>(cfg.warmup_steps);
  return cfg.peak_lr * static_cast<double>(cfg.steps - step) /
         static_cast<double>(cfg.steps - cfg.warmup_steps);
}

namespace {

std::string config_text(const ModelConfig& c) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "layers=%d\nd_model=%d\nd_ff=%d\nheads=%d\nmax_seg_len=%d\n"
                "vocab_size=%d\ndropout_embed=%.9g\ndropout_encoder=%.9g\n"
                "dropout_decoder_in=%.9g\nmax_len=%d\n",
                c.layers, c.d_model, c.d_ff, c.heads, c.max_seg_len,
                c.vocab_size, c.dropout_embed, c.dropout_encoder,
                c.dropout_decoder_in, c.max_len);
  return buf;
}

ModelConfig parse_config_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("checkpoint: bad config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "layers") c.layers = std::stoi(val);
    else if (key == "d_model") c.d_model = std::stoi(val);
    else if (key == "d_ff") c.d_ff = std::stoi(val);
    else if (key == "heads") c.heads = std::stoi(val);
    else if (key == "max_seg_len") c.max_seg_len = std::stoi(val);
    else if (key == "vocab_size") c.vocab_size = std::stoi(val);
    else if (key == "dropout_embed") c.dropout_embed = std::stof(val);
    else if (key == "dropout_encoder") c.dropout_encoder = std::stof(val);
    else if (key == "dropout_decoder_in") c.dropout_decoder_in = std::stof(val);
    else if (key == "max_len") c.max_len = std::stoi(val);
    else throw DataError("checkpoint: unknown config key '" + key + "'");
  }
  return c;
}

Tensor clone_tensor(const Tensor& t) {
  Tensor c = Tensor::from(t.shape(),
                          std::vector<float>(t.data(), t.data() + t.numel()));
  c.set_requires_grad(t.requires_grad());
  return c;
}

BlockParams clone_block(const BlockParams& b) {
  BlockParams c;
  c.wq = clone_tensor(b.wq); c.bq = clone_tensor(b.bq);
  c.wk = clone_tensor(b.wk); c.bk = clone_tensor(b.bk);
  c.wv = clone_tensor(b.wv); c.bv = clone_tensor(b.bv);
  c.wo = clone_tensor(b.wo); c.bo = clone_tensor(b.bo);
  c.ln1_g = clone_tensor(b.ln1_g); c.ln1_b = clone_tensor(b.ln1_b);
  c.ln2_g = clone_tensor(b.ln2_g); c.ln2_b = clone_tensor(b.ln2_b);
  c.ff1_w = clone_tensor(b.ff1_w); c.ff1_b = clone_tensor(b.ff1_b);
  c.ff2_w = clone_tensor(b.ff2_w); c.ff2_b = clone_tensor(b.ff2_b);
  return c;
}

double ln2() { return std::log(2.0); }

// length-bucketed batches: stable sort by line length, then fixed-size chunks
std::vector<std::vector<int>> make_batches(
    const std::vector<EncodedLine>& lines, int batch_size) {
  std::vector<int> order(lines.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return lines[a].ids.size() < lines[b].ids.size();
  });
  std::vector<std::vector<int>> batches;
  for (size_t i = 0; i < order.size(); i += batch_size) {
    const size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

void check_corpus(const std::vector<EncodedLine>& lines, int vocab_size,
                  const char* which) {
  if (lines.empty())
    throw DataError(std::string("train: empty ") + which + " corpus");
  for (size_t i = 0; i < lines.size(); ++i)
    for (int id : lines[i].ids)
      if (id < 0 || id >= vocab_size)
        throw DataError("train: " + std::string(which) + " line " +
                        std::to_string(i + 1) + " has id " +
                        std::to_string(id) + " outside the vocab");
}

}  // namespace

MslmParams train::clone_params(const MslmParams& p) {
  MslmParams c;
  c.embed = clone_tensor(p.embed);
  for (const auto& b : p.fwd_blocks) c.fwd_blocks.push_back(clone_block(b));
  for (const auto& b : p.bwd_blocks) c.bwd_blocks.push_back(clone_block(b));
  c.combiner = clone_block(p.combiner);
  c.final_ln_g = clone_tensor(p.final_ln_g);
  c.final_ln_b = clone_tensor(p.final_ln_b);
  c.dec_init_w = clone_tensor(p.dec_init_w);
  c.dec_init_b = clone_tensor(p.dec_init_b);
  c.lstm_wx = clone_tensor(p.lstm_wx);
  c.lstm_wh = clone_tensor(p.lstm_wh);
  c.lstm_b = clone_tensor(p.lstm_b);
  c.out_bias = clone_tensor(p.out_bias);
  return c;
}

uint64_t train::params_fingerprint(const MslmParams& p) {
  Fnv1a h;
  const auto names = p.names();
  const auto ts = p.all();
  for (size_t i = 0; i < ts.size(); ++i) {
    h.update(names[i]);
    for (size_t j = 0; j < ts[i].numel(); ++j) {
      const float v = ts[i].data()[j];
      uint32_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      h.update_u64(bits);
    }
  }
  return h.digest();
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "seglm-ckpt v1\n";
  write_u32le(out, static_cast<uint32_t>(step));
  write_f64le(out, val_bpc);
  write_lp_string(out, config_text(config));
  write_lp_string(out, vocab.to_text());
  write_lp_string(out, provenance);

  const auto ts = params.all();
  const auto names = params.names();
  write_u32le(out, static_cast<uint32_t>(ts.size()));
  for (size_t i = 0; i < ts.size(); ++i) {
    write_lp_string(out, names[i]);
    const auto& shape = ts[i].shape();
    write_u32le(out, static_cast<uint32_t>(shape.size()));
    for (int d : shape) write_u32le(out, static_cast<uint32_t>(d));
    for (size_t j = 0; j < ts[i].numel(); ++j) write_f32le(out, ts[i].data()[j]);
  }

  const bool has_opt = !opt.m.empty();
  out.put(has_opt ? 1 : 0);
  if (has_opt) {
    if (opt.m.size() != ts.size() || opt.v.size() != ts.size())
      throw DataError("checkpoint: optimizer state does not match parameters");
    write_u64le(out, static_cast<uint64_t>(opt.t));
    for (size_t i = 0; i < ts.size(); ++i) {
      for (float v : opt.m[i]) write_f32le(out, v);
      for (float v : opt.v[i]) write_f32le(out, v);
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header) || header != "seglm-ckpt v1")
    throw DataError("bad checkpoint header in " + path);
  Checkpoint ck;
  ck.step = static_cast<int>(read_u32le(in));
  ck.val_bpc = read_f64le(in);
  ck.config = parse_config_text(read_lp_string(in));
  ck.config.validate();
  ck.vocab = CharVocab::from_text(read_lp_string(in));
  ck.provenance = read_lp_string(in);
  if (ck.vocab.size() != ck.config.vocab_size)
    throw DataError("checkpoint: vocab size disagrees with config in " + path);

  Rng rng(0);
  ck.params = init_params(ck.config, rng);
  auto ts = ck.params.all();
  const auto names = ck.params.names();
  const uint32_t n = read_u32le(in);
  if (n != ts.size())
    throw DataError("checkpoint: expected " + std::to_string(ts.size()) +
                    " tensors, found " + std::to_string(n));
  for (size_t i = 0; i < ts.size(); ++i) {
    const std::string name = read_lp_string(in);
    if (name != names[i])
      throw DataError("checkpoint: tensor '" + name + "' where '" + names[i] +
                      "' was expected");
    const uint32_t ndim = read_u32le(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_u32le(in));
    if (shape != ts[i].shape())
      throw DataError("checkpoint: tensor '" + name + "' has shape " +
                      shape_str(shape) + ", expected " +
                      shape_str(ts[i].shape()));
    for (size_t j = 0; j < ts[i].numel(); ++j) ts[i].data()[j] = read_f32le(in);
  }
  const int has_opt = in.get();
  if (has_opt == 1) {
    ck.opt.t = static_cast<int64_t>(read_u64le(in));
    ck.opt.m.resize(ts.size());
    ck.opt.v.resize(ts.size());
    for (size_t i = 0; i < ts.size(); ++i) {
      ck.opt.m[i].resize(ts[i].numel());
      for (auto& v : ck.opt.m[i]) v = read_f32le(in);
      ck.opt.v[i].resize(ts[i].numel());
      for (auto& v : ck.opt.v[i]) v = read_f32le(in);
    }
  }
  if (!in) throw DataError("truncated checkpoint: " + path);
  return ck;
}

double train::corpus_bpc(const MslmParams& params, const ModelConfig& cfg,
                         const std::vector<EncodedLine>& lines,
                         int batch_size) {
  if (lines.empty()) throw DataError("corpus_bpc: empty corpus");
  NoGradGuard ng;
  double sum_nll = 0.0;
  int64_t total_chars = 0;
  for (const auto& batch : make_batches(lines, batch_size)) {
    std::vector<const EncodedLine*> ptrs;
    ptrs.reserve(batch.size());
    for (int i : batch) ptrs.push_back(&lines[i]);
    std::vector<double> logzs;
    nll_loss(params, cfg, ptrs, nullptr, &logzs);
    for (size_t i = 0; i < ptrs.size(); ++i) {
      sum_nll -= logzs[i];
      total_chars += static_cast<int64_t>(ptrs[i]->ids.size());
    }
  }
  return sum_nll / (ln2() * static_cast<double>(total_chars));
}

double train::segmentation_f1(const MslmParams& params, const ModelConfig& cfg,
                              const std::vector<EncodedLine>& lines) {
  if (lines.empty()) throw DataError("segmentation_f1: empty corpus");
  std::vector<Segmentation> pred, gold;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (!lines[i].has_gold)
      throw DataError("segmentation_f1: line " + std::to_string(i + 1) +
                      " carries no gold segmentation");
    const int T = static_cast<int>(lines[i].ids.size());
    pred.push_back(segment_ids(params, cfg, lines[i].ids));
    gold.push_back(Segmentation::from_gaps(lines[i].gold_boundaries, T));
  }
  return eval::span_prf(pred, gold).f1;
}

double train::monitor_mcc(const Checkpoint& ckpt,
                          const std::vector<EncodedLine>& gold_lines) {
  if (gold_lines.empty()) throw DataError("monitor_mcc: empty corpus");
  std::vector<std::vector<uint8_t>> pred, gold;
  for (size_t i = 0; i < gold_lines.size(); ++i) {
    const auto& line = gold_lines[i];
    if (!line.has_gold)
      throw DataError("monitor_mcc: line " + std::to_string(i + 1) +
                      " carries no gold segmentation");
    const int T = static_cast<int>(line.ids.size());
    Segmentation seg = segment_ids(ckpt.params, ckpt.config, line.ids);
    auto pb = gaps_to_bits(seg.gaps(), T);
    auto gb = gaps_to_bits(line.gold_boundaries, T);
    pred.emplace_back(pb.begin(), pb.end());
    gold.emplace_back(gb.begin(), gb.end());
  }
  return eval::mcc(pred, gold);
}

Checkpoint train::extend_for_vocab(const Checkpoint& ckpt,
                                   const CharVocab& merged, uint64_t seed) {
  const int old_v = ckpt.config.vocab_size;
  const int new_v = merged.size();
  if (new_v < old_v)
    throw DataError("extend_for_vocab: merged vocab is smaller than the "
                    "checkpoint's");
  for (int id = CharVocab::kNumSpecials; id < old_v; ++id)
    if (ckpt.vocab.char_at(id) != merged.char_at(id))
      throw DataError("extend_for_vocab: merged vocab does not extend the "
                      "checkpoint's (id " + std::to_string(id) + " differs)");

  Checkpoint out;
  out.step = 0;
  out.config = ckpt.config;
  out.config.vocab_size = new_v;
  out.vocab = merged;
  out.provenance = "extended from " + hex_u64(params_fingerprint(ckpt.params));
  out.params = clone_params(ckpt.params);
  if (new_v == old_v) return out;

  const int d = ckpt.config.d_model;
  Rng rng(mix_seed(seed, 0x657874));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<float> emb(static_cast<size_t>(new_v) * d);
  std::copy(ckpt.params.embed.data(),
            ckpt.params.embed.data() + static_cast<size_t>(old_v) * d,
            emb.begin());
  for (size_t i = static_cast<size_t>(old_v) * d; i < emb.size(); ++i)
    emb[i] = static_cast<float>(rng.normal(0.0, sd));
  out.params.embed = Tensor::from({new_v, d}, std::move(emb));
  out.params.embed.set_requires_grad(true);

  std::vector<float> ob(static_cast<size_t>(new_v), 0.0f);
  std::copy(ckpt.params.out_bias.data(), ckpt.params.out_bias.data() + old_v,
            ob.begin());
  out.params.out_bias = Tensor::from({new_v}, std::move(ob));
  out.params.out_bias.set_requires_grad(true);
  return out;
}

std::vector<Checkpoint> train::train_run(
    const TrainConfig& tc, const ModelConfig& mc, const CharVocab& vocab,
    const std::vector<EncodedLine>& train_lines,
    const std::vector<EncodedLine>& val_lines, const RunOptions& opts) {
  tc.validate();
  mc.validate();
  if (vocab.size() != mc.vocab_size)
    throw DataError("train: vocab of " + std::to_string(vocab.size()) +
                    " entries vs model vocab_size " +
                    std::to_string(mc.vocab_size));
  check_corpus(train_lines, mc.vocab_size, "training");
  check_corpus(val_lines, mc.vocab_size, "validation");

  ModelConfig run_cfg = mc;
  run_cfg.dropout_encoder = tc.encoder_dropout;
  run_cfg.dropout_embed = tc.other_dropout;
  run_cfg.dropout_decoder_in = tc.other_dropout;
  ModelConfig eval_cfg = run_cfg;  // rates are ignored when dropout is off

  MslmParams params;
  std::string parent = "fresh";
  if (opts.init) {
    const ModelConfig& ic = opts.init->config;
    if (ic.layers != mc.layers || ic.d_model != mc.d_model ||
        ic.d_ff != mc.d_ff || ic.heads != mc.heads ||
        ic.max_seg_len != mc.max_seg_len || ic.vocab_size != mc.vocab_size)
      throw DataError("train: checkpoint architecture does not match the "
                      "requested model");
    params = clone_params(opts.init->params);
    parent = hex_u64(params_fingerprint(opts.init->params));
  } else {
    Rng rng(mix_seed(tc.seed, 0x696e6974));
    params = init_params(run_cfg, rng);
    if (opts.embeddings) {
      const auto& e = *opts.embeddings;
      if (e.vocab != mc.vocab_size || e.dim != mc.d_model)
        throw DataError("train: embedding table is " + std::to_string(e.vocab) +
                        "x" + std::to_string(e.dim) + ", model needs " +
                        std::to_string(mc.vocab_size) + "x" +
                        std::to_string(mc.d_model));
      if (e.vocab_hash != vocab.fingerprint())
        throw DataError("train: embedding table was built for a different "
                        "vocab");
      std::copy(e.matrix.begin(), e.matrix.end(), params.embed.data());
    }
  }
  params.set_requires_grad(true);

  Fnv1a prov_hash;
  prov_hash.update(config_text(run_cfg));
  prov_hash.update_u64(tc.seed);
  prov_hash.update_u64(static_cast<uint64_t>(tc.steps));
  prov_hash.update_u64(static_cast<uint64_t>(tc.warmup_steps));
  const std::string provenance =
      "config=" + hex_u64(prov_hash.digest()) + " parent=" + parent +
      " seed=" + std::to_string(tc.seed) +
      (tc.mode == TrainConfig::Mode::kFinetune ? " mode=finetune"
                                               : " mode=pretrain");

  auto tensors = params.all();
  AdamState opt;
  opt.m.resize(tensors.size());
  opt.v.resize(tensors.size());
  for (size_t i = 0; i < tensors.size(); ++i) {
    opt.m[i].assign(tensors[i].numel(), 0.0f);
    opt.v[i].assign(tensors[i].numel(), 0.0f);
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  const auto batches = make_batches(train_lines, tc.batch_size);
  std::vector<int> batch_order(batches.size());
  std::iota(batch_order.begin(), batch_order.end(), 0);

  const bool any_dropout = tc.encoder_dropout > 0.0f || tc.other_dropout > 0.0f;
  std::vector<Checkpoint> checkpoints;

  for (int step = 1; step <= tc.steps; ++step) {
    const size_t pos = static_cast<size_t>(step - 1) % batches.size();
    if (pos == 0) {
      const uint64_t epoch = static_cast<uint64_t>(step - 1) / batches.size();
      Rng shuf(mix_seed(tc.seed, 0x626f726f, epoch));
      for (size_t i = batch_order.size(); i > 1; --i)
        std::swap(batch_order[i - 1], batch_order[shuf.uniform_int(i)]);
    }
    const auto& batch = batches[batch_order[pos]];
    std::vector<const EncodedLine*> ptrs;
    ptrs.reserve(batch.size());
    int64_t batch_chars = 0;
    for (int i : batch) {
      ptrs.push_back(&train_lines[i]);
      batch_chars += static_cast<int64_t>(train_lines[i].ids.size());
    }

    DropoutPlan plan{any_dropout, mix_seed(tc.seed, 0x64726f70,
                                           static_cast<uint64_t>(step)), 0};
    std::vector<double> logzs;
    Tensor loss = nll_loss(params, run_cfg, ptrs,
                           any_dropout ? &plan : nullptr, &logzs);
    const double loss_val = loss.item();
    if (!std::isfinite(loss_val))
      throw DivergenceError("train: non-finite loss at step " +
                                std::to_string(step),
                            step);
    double batch_nll = 0.0;
    for (double z : logzs) batch_nll -= z;
    const double train_bpc =
        batch_nll / (ln2() * static_cast<double>(batch_chars));

    auto grads = grad_of(loss, tensors);
    double sq = 0.0;
    for (const auto& g : grads)
      for (size_t j = 0; j < g.numel(); ++j)
        sq += static_cast<double>(g.data()[j]) * g.data()[j];
    const double gnorm = std::sqrt(sq);
    const float clip =
        gnorm > 1.0 ? static_cast<float>(1.0 / gnorm) : 1.0f;

    opt.t += 1;
    const double lr = lr_at(tc, step);
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(opt.t));
    for (size_t i = 0; i < tensors.size(); ++i) {
      float* p = tensors[i].data();
      const float* g = grads[i].data();
      float* m = opt.m[i].data();
      float* v = opt.v[i].data();
      const size_t n = tensors[i].numel();
      for (size_t j = 0; j < n; ++j) {
        const float gj = g[j] * clip;
        m[j] = static_cast<float>(kBeta1 * m[j] + (1.0 - kBeta1) * gj);
        v[j] = static_cast<float>(kBeta2 * v[j] + (1.0 - kBeta2) * gj * gj);
        const double mh = m[j] / bc1;
        const double vh = v[j] / bc2;
        p[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + kEps));
      }
    }

    if (step % tc.checkpoint_every == 0 || step == tc.steps) {
      Checkpoint ck;
      ck.step = step;
      ck.config = eval_cfg;
      ck.vocab = vocab;
      ck.params = clone_params(params);
      ck.val_bpc = corpus_bpc(params, eval_cfg, val_lines, tc.batch_size);
      ck.opt.t = opt.t;
      ck.opt.m = opt.m;
      ck.opt.v = opt.v;
      ck.provenance = provenance;
      if (opts.metrics) {
        char buf[160];
        if (opts.mcc_val) {
          const double m = monitor_mcc(ck, *opts.mcc_val);
          std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\t%.6f\n", step,
                        train_bpc, ck.val_bpc, m);
        } else {
          std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\n", step, train_bpc,
                        ck.val_bpc);
        }
        (*opts.metrics) << buf << std::flush;
      }
      checkpoints.push_back(std::move(ck));
    }
  }
  return checkpoints;
}

const Checkpoint& train::select_best(const std::vector<Checkpoint>& ckpts) {
  if (ckpts.empty()) throw DataError("select_best: no checkpoints");
  size_t best = 0;
  for (size_t i = 1; i < ckpts.size(); ++i)
    if (ckpts[i].val_bpc < ckpts[best].val_bpc) best = i;
  return ckpts[best];
}

std::string train::SweepReport::tsv() const {
  std::string out = "lr\tencoder_dropout\tstatus\tbest_step\tbest_val_bpc\tf1\n";
  char buf[256];
  for (const auto& r : rows) {
    if (r.failed) {
      std::snprintf(buf, sizeof(buf), "%.9g\t%.9g\tfailed\t-\t-\t-\n", r.lr,
                    static_cast<double>(r.dropout));
      out += buf;
      continue;
    }
    std::snprintf(buf, sizeof(buf), "%.9g\t%.9g\tok\t%d\t%.6f\t", r.lr,
                  static_cast<double>(r.dropout), r.best_step, r.best_val_bpc);
    out += buf;
    if (r.f1 >= 0.0) {
      std::snprintf(buf, sizeof(buf), "%.6f\n", r.f1);
      out += buf;
    } else {
      out += "-\n";
    }
  }
  if (has_f1_summary) {
    std::snprintf(buf, sizeof(buf),
                  "# top-4 by bpc: f1 mean %.6f +/- %.6f (%.1f%%)\n",
                  top_f1_mean, top_f1_stdev, 100.0 * top_f1_ratio);
    out += buf;
  }
  if (winner >= 0) {
    std::snprintf(buf, sizeof(buf), "# winner: lr %.9g dropout %.9g\n",
                  rows[winner].lr, static_cast<double>(rows[winner].dropout));
    out += buf;
  }
  return out;
}

train::SweepReport train::sweep(const SweepGrid& grid, const TrainConfig& base,
                                const ModelConfig& mc, const CharVocab& vocab,
                                const std::vector<EncodedLine>& train_lines,
                                const std::vector<EncodedLine>& val_lines,
                                bool score_gold_f1, int jobs) {
  if (grid.learning_rates.empty() || grid.encoder_dropouts.empty())
    throw DataError("sweep: empty grid");
  SweepReport report;
  for (double lr : grid.learning_rates)
    for (float dr : grid.encoder_dropouts) {
      SweepRow row;
      row.lr = lr;
      row.dropout = dr;
      report.rows.push_back(row);
    }

  auto run_point = [&](SweepRow& row) {
    TrainConfig tc = base;
    tc.peak_lr = row.lr;
    tc.encoder_dropout = row.dropout;
    try {
      auto cks = train_run(tc, mc, vocab, train_lines, val_lines, {});
      const Checkpoint& best = select_best(cks);
      row.best_step = best.step;
      row.best_val_bpc = best.val_bpc;
      if (score_gold_f1)
        row.f1 = segmentation_f1(best.params, best.config, val_lines);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  };

  const int n = static_cast<int>(report.rows.size());
  if (jobs <= 1) {
    for (auto& row : report.rows) run_point(row);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
        run_point(report.rows[i]);
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < std::min(jobs, n); ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (int i = 0; i < n; ++i) {
    const auto& r = report.rows[i];
    if (r.failed) continue;
    if (report.winner < 0 ||
        r.best_val_bpc < report.rows[report.winner].best_val_bpc)
      report.winner = i;
  }

  if (score_gold_f1) {
    std::vector<const SweepRow*> ok;
    for (const auto& r : report.rows)
      if (!r.failed && r.f1 >= 0.0) ok.push_back(&r);
    std::sort(ok.begin(), ok.end(), [](const SweepRow* a, const SweepRow* b) {
      return a->best_val_bpc < b->best_val_bpc;
    });
    if (ok.size() > 4) ok.resize(4);
    if (ok.size() >= 2) {
      double mean = 0.0;
      for (const auto* r : ok) mean += r->f1;
      mean /= static_cast<double>(ok.size());
      double ss = 0.0;
      for (const auto* r : ok) ss += (r->f1 - mean) * (r->f1 - mean);
      const double stdev = std::sqrt(ss / static_cast<double>(ok.size() - 1));
      report.has_f1_summary = true;
      report.top_f1_mean = mean;
      report.top_f1_stdev = stdev;
      report.top_f1_ratio = mean != 0.0 ? stdev / mean : 0.0;
    }
  }
  return report;
}

std::vector<RawCorpus> train::size_ladder(const RawCorpus& corpus,
                                          const std::vector<int64_t>& sizes,
                                          uint64_t seed) {
  if (sizes.empty()) throw DataError("size_ladder: no sizes");
  for (size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] < sizes[i - 1])
      throw DataError("size_ladder: sizes must be ascending");
  std::vector<RawCorpus> out;
  out.reserve(sizes.size());
  for (int64_t s : sizes)
    out.push_back(corpus::downsample(corpus, s, seed));
  return out;
}

}  // namespace seglm
