#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seglm/corpus.hpp"
#include "seglm/embed.hpp"
#include "seglm/model.hpp"

namespace seglm {

struct TrainConfig {
  int steps = 16768;
  int warmup_steps = 1024;
  double peak_lr = 7e-4;
  float encoder_dropout = 0.25f;
  float other_dropout = 0.0625f;  // embeddings and decoder inputs
  int batch_size = 32;
  int checkpoint_every = 128;
  uint64_t seed = 1;
  enum class Mode { kPretrain, kFinetune };
  Mode mode = Mode::kPretrain;

  void validate() const;
};

// Triangular schedule: linear ramp to peak_lr over warmup_steps, linear
// decay to zero at `steps`. Continuous, peaks exactly at the warmup step.
double lr_at(const TrainConfig& cfg, int step);

struct AdamState {
  std::vector<std::vector<float>> m, v;  // one pair per parameter tensor
  int64_t t = 0;
};

struct Checkpoint {
  int step = 0;
  ModelConfig config;
  CharVocab vocab;
  MslmParams params;
  double val_bpc = 0.0;
  AdamState opt;
  std::string provenance;  // config hash, parent, seed

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

namespace train {

MslmParams clone_params(const MslmParams& p);
uint64_t params_fingerprint(const MslmParams& p);

// Character-weighted corpus bpc: sum of -log marginal over lines divided by
// (ln 2 * total characters). Dropout off, no gradients.
double corpus_bpc(const MslmParams& params, const ModelConfig& cfg,
                  const std::vector<EncodedLine>& lines, int batch_size = 32);

// Micro-averaged exact-span F1 of the model's own segmentations against the
// lines' gold boundaries (every line must carry them).
double segmentation_f1(const MslmParams& params, const ModelConfig& cfg,
                       const std::vector<EncodedLine>& lines);

// Boundary MCC of a checkpoint on a gold-segmented corpus. Diagnostic only;
// never an input to checkpoint selection.
double monitor_mcc(const Checkpoint& ckpt,
                   const std::vector<EncodedLine>& gold_lines);

// Grow a checkpoint to a superset vocab: rows for the appended ids are drawn
// like a fresh init, everything else is copied bit-for-bit.
Checkpoint extend_for_vocab(const Checkpoint& ckpt, const CharVocab& merged,
                            uint64_t seed);

struct RunOptions {
  const Checkpoint* init = nullptr;            // warm start (fine-tuning)
  const EmbeddingTable* embeddings = nullptr;  // embedding init for fresh runs
  std::ostream* metrics = nullptr;  // "step\ttrain_bpc\tval_bpc[\tmcc]" rows
  const std::vector<EncodedLine>* mcc_val = nullptr;  // enables the mcc column
};

// Adam optimization of the segmental objective with the lr_at schedule,
// gradient clipping at global norm 1.0, and a checkpoint (with validation
// bpc) every checkpoint_every steps. Deterministic for fixed inputs.
std::vector<Checkpoint> train_run(const TrainConfig& tc, const ModelConfig& mc,
                                  const CharVocab& vocab,
                                  const std::vector<EncodedLine>& train_lines,
                                  const std::vector<EncodedLine>& val_lines,
                                  const RunOptions& opts = {});

// Lowest validation bpc; ties go to the earliest step.
const Checkpoint& select_best(const std::vector<Checkpoint>& ckpts);

struct SweepGrid {
  std::vector<double> learning_rates;
  std::vector<float> encoder_dropouts;
};

struct SweepRow {
  double lr = 0.0;
  float dropout = 0.0f;
  bool failed = false;
  std::string error;
  int best_step = 0;
  double best_val_bpc = 0.0;
  double f1 = -1.0;  // -1 when no gold was scored
};

struct SweepReport {
  std::vector<SweepRow> rows;
  int winner = -1;  // row index of the lowest-bpc successful run
  bool has_f1_summary = false;
  double top_f1_mean = 0.0;
  double top_f1_stdev = 0.0;   // sample stdev over the top rows by bpc
  double top_f1_ratio = 0.0;   // stdev / mean
  std::string tsv() const;
};

// One train_run per (learning rate, encoder dropout) grid point. A diverged
// run is recorded as failed and the sweep continues. score_gold_f1 adds the
// best checkpoint's span F1 on the validation gold; jobs > 1 runs grid
// points in parallel threads (results are order-independent).
SweepReport sweep(const SweepGrid& grid, const TrainConfig& base,
                  const ModelConfig& mc, const CharVocab& vocab,
                  const std::vector<EncodedLine>& train_lines,
                  const std::vector<EncodedLine>& val_lines,
                  bool score_gold_f1 = false, int jobs = 1);

// Nested downsamples (each size a subset of every larger one), produced by
// sharing one sampling seed across sizes.
std::vector<RawCorpus> size_ladder(const RawCorpus& corpus,
                                   const std::vector<int64_t>& sizes,
                                   uint64_t seed);

}  // namespace train
}  // namespace seglm
