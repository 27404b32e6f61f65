#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seglm/common.hpp"
#include "seglm/corpus.hpp"
#include "seglm/lattice.hpp"
#include "seglm/tensor.hpp"

namespace seglm {

struct ModelConfig {
  int layers = 4;      // blocks per directional stack
  int d_model = 256;
  int d_ff = 512;
  int heads = 4;
  int max_seg_len = 10;  // k
  int vocab_size = 0;
  float dropout_embed = 0.0625f;
  float dropout_encoder = 0.125f;
  float dropout_decoder_in = 0.0625f;
  int max_len = 4096;  // longest encodable line (in characters)

  void validate() const;
};

// One pre-norm transformer block (self-attention or the combiner below).
struct BlockParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
};

// The encoder runs two masked stacks over the input: a causal stack (state at
// q sees positions <= q) and an anti-causal stack (state at q sees positions
// >= q). A single combiner attention block then merges them under the
// segmental visibility rule: query q attends causal states at s <= q and
// anti-causal states at s >= q+k+1. Stacking ordinary segmentally-masked
// layers instead would leak the hidden span: at depth two, position q reads
// its left neighbor's layer-one state, which saw q's span. The two-stack
// form keeps every h[q] exactly blind to characters q+1..q+k at any depth.
struct MslmParams {
  Tensor embed;  // [V, d]; also the (tied) output projection
  std::vector<BlockParams> fwd_blocks;
  std::vector<BlockParams> bwd_blocks;
  BlockParams combiner;
  Tensor final_ln_g, final_ln_b;
  Tensor dec_init_w, dec_init_b;            // h[i] -> (hidden, cell), [d, 2d]
  Tensor lstm_wx, lstm_wh, lstm_b;          // [d,4d], [d,4d], [4d]
  Tensor out_bias;                          // [V]

  // Every tensor in the documented serialization order, with names.
  std::vector<Tensor> all() const;
  std::vector<std::string> names() const;
  void set_requires_grad(bool v);
  size_t param_count() const;
};

MslmParams init_params(const ModelConfig& cfg, Rng& rng);

// Per-forward dropout seeding. Each dropout site pulls the next counter
// value, so a fixed (seed, call order) reproduces every mask exactly.
struct DropoutPlan {
  bool enabled = false;
  uint64_t seed = 0;
  uint64_t counter = 0;
  uint64_t next() { return mix_seed(seed, ++counter); }
};

// Visibility of key position s to query position q: s <= q or s >= q+k+1.
// Row-major [T_padded, T_padded], 1 = visible.
std::vector<char> build_segmental_mask(int T_padded, int k);

// Hidden states for one line, <bos> prepended: returns [T+1, d]; row i is the
// context encoding used by segments starting at character i+1.
Tensor encode(const MslmParams& params, const ModelConfig& cfg,
              const std::vector<int>& char_ids, DropoutPlan* drop = nullptr);

// Segment log-probabilities from the decoder, as a 64-bit lattice (no tape).
// k_override > 0 scores a different maximum segment length than cfg.
EdgeLattice score_edges(const MslmParams& params, const ModelConfig& cfg,
                        const Tensor& h, const std::vector<int>& char_ids,
                        int k_override = 0);

// Mean over lines of -log marginal; differentiable. line_logz, if given,
// receives each line's log marginal for character-weighted bpc.
Tensor nll_loss(const MslmParams& params, const ModelConfig& cfg,
                const std::vector<const EncodedLine*>& batch,
                DropoutPlan* drop = nullptr,
                std::vector<double>* line_logz = nullptr);

Segmentation segment_ids(const MslmParams& params, const ModelConfig& cfg,
                         const std::vector<int>& char_ids);

// Whitespace-stripped input re-segmented by the model: single spaces at the
// predicted boundaries; characters (including out-of-vocab ones) preserved.
std::string segment_line(const MslmParams& params, const ModelConfig& cfg,
                         const CharVocab& vocab, std::string_view line);

}  // namespace seglm
