#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seglm/corpus.hpp"

namespace seglm {

// Character embedding table used to initialize the model. Rows cover the
// whole vocab including specials; `counts` records how often each id was
// seen while training (in memory only, not part of the file format).
struct EmbeddingTable {
  int vocab = 0;
  int dim = 0;
  uint64_t vocab_hash = 0;
  std::vector<float> matrix;     // [vocab, dim] row-major
  std::vector<uint64_t> counts;  // per-id corpus occurrences

  float* row(int id) { return matrix.data() + static_cast<size_t>(id) * dim; }
  const float* row(int id) const {
    return matrix.data() + static_cast<size_t>(id) * dim;
  }

  void save(const std::string& path) const;
  static EmbeddingTable load(const std::string& path);
};

namespace embed {

// Continuous-bag-of-words trainer: predict each character from the mean of
// its neighbors' input vectors through a full softmax. The window never
// crosses a line break. Learning rate decays linearly from kCbowLr0 to
// kCbowLr1 over all updates. Deterministic for a fixed seed.
inline constexpr double kCbowLr0 = 0.05;
inline constexpr double kCbowLr1 = 0.0001;

EmbeddingTable train_cbow(const std::vector<EncodedLine>& corpus,
                          const CharVocab& vocab, int dim, int window,
                          int epochs, uint64_t seed,
                          std::vector<double>* epoch_loss = nullptr);

// Re-draws the rows for special symbols and for characters that never
// occurred in the training corpus from N(0, 1/dim); all other rows are
// left bit-identical.
EmbeddingTable init_specials(EmbeddingTable table, const CharVocab& vocab,
                             uint64_t seed);

}  // namespace embed
}  // namespace seglm
