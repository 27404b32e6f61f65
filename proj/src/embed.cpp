#include "seglm/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "seglm/common.hpp"

namespace seglm {

void EmbeddingTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "seglm-emb v1\n";
  write_u32le(out, static_cast<uint32_t>(vocab));
  write_u32le(out, static_cast<uint32_t>(dim));
  write_u64le(out, vocab_hash);
  for (float v : matrix) write_f32le(out, v);
  if (!out) throw DataError("write failed: " + path);
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header) || header != "seglm-emb v1")
    throw DataError("bad embedding header in " + path);
  EmbeddingTable t;
  t.vocab = static_cast<int>(read_u32le(in));
  t.dim = static_cast<int>(read_u32le(in));
  t.vocab_hash = read_u64le(in);
  if (t.vocab < CharVocab::kNumSpecials || t.dim < 1)
    throw DataError("bad embedding dimensions in " + path);
  t.matrix.resize(static_cast<size_t>(t.vocab) * t.dim);
  for (auto& v : t.matrix) v = read_f32le(in);
  if (!in) throw DataError("truncated embedding file: " + path);
  return t;
}

namespace embed {

EmbeddingTable train_cbow(const std::vector<EncodedLine>& corpus,
                          const CharVocab& vocab, int dim, int window,
                          int epochs, uint64_t seed,
                          std::vector<double>* epoch_loss) {
  if (corpus.empty()) throw DataError("train_cbow: empty corpus");
  if (dim < 1) throw DataError("train_cbow: dim must be >= 1");
  if (window < 1) throw DataError("train_cbow: window must be >= 1");
  if (epochs < 1) throw DataError("train_cbow: epochs must be >= 1");
  const int V = vocab.size();

  EmbeddingTable t;
  t.vocab = V;
  t.dim = dim;
  t.vocab_hash = vocab.fingerprint();
  t.matrix.assign(static_cast<size_t>(V) * dim, 0.0f);
  t.counts.assign(V, 0);

  size_t positions = 0;
  for (const auto& line : corpus) {
    for (int id : line.ids) {
      if (id < 0 || id >= V)
        throw DataError("train_cbow: id " + std::to_string(id) +
                        " outside vocab of " + std::to_string(V));
      ++t.counts[static_cast<size_t>(id)];
    }
    if (line.ids.size() >= 2) positions += line.ids.size();
  }
  if (positions == 0)
    throw DataError("train_cbow: no position has any context");

  Rng rng(mix_seed(seed, 0x63626f77));
  const float init_a = 0.5f / static_cast<float>(dim);
  for (auto& v : t.matrix) v = static_cast<float>(rng.uniform(-init_a, init_a));
  // output side of the softmax; discarded after training
  std::vector<float> out_w(static_cast<size_t>(V) * dim, 0.0f);

  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), size_t{0});

  const size_t total_updates = positions * static_cast<size_t>(epochs);
  size_t update = 0;
  std::vector<double> h(dim), dh(dim), probs(V);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuf(mix_seed(seed, 0x65706f63, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuf.uniform_int(i)]);
    double loss_sum = 0.0;
    size_t loss_n = 0;

    for (size_t li : order) {
      const auto& ids = corpus[li].ids;
      const int T = static_cast<int>(ids.size());
      if (T < 2) continue;
      for (int c = 0; c < T; ++c) {
        const int lo = std::max(0, c - window);
        const int hi = std::min(T - 1, c + window);
        const int n_ctx = hi - lo;  // excludes the center itself
        const double lr =
            kCbowLr0 + (kCbowLr1 - kCbowLr0) *
                           (static_cast<double>(update) /
                            static_cast<double>(std::max<size_t>(
                                total_updates - 1, 1)));
        ++update;

        std::fill(h.begin(), h.end(), 0.0);
        for (int j = lo; j <= hi; ++j) {
          if (j == c) continue;
          const float* r = t.row(ids[j]);
          for (int q = 0; q < dim; ++q) h[q] += r[q];
        }
        for (int q = 0; q < dim; ++q) h[q] /= n_ctx;

        double mx = -1e300;
        for (int v = 0; v < V; ++v) {
          const float* w = out_w.data() + static_cast<size_t>(v) * dim;
          double s = 0.0;
          for (int q = 0; q < dim; ++q) s += h[q] * w[q];
          probs[v] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int v = 0; v < V; ++v) {
          probs[v] = std::exp(probs[v] - mx);
          z += probs[v];
        }
        for (int v = 0; v < V; ++v) probs[v] /= z;
        loss_sum += -std::log(std::max(probs[ids[c]], 1e-300));
        ++loss_n;

        std::fill(dh.begin(), dh.end(), 0.0);
        for (int v = 0; v < V; ++v) {
          const double g = probs[v] - (v == ids[c] ? 1.0 : 0.0);
          float* w = out_w.data() + static_cast<size_t>(v) * dim;
          for (int q = 0; q < dim; ++q) {
            dh[q] += g * w[q];
            w[q] -= static_cast<float>(lr * g * h[q]);
          }
        }
        const double ctx_lr = lr / n_ctx;
        for (int j = lo; j <= hi; ++j) {
          if (j == c) continue;
          float* r = t.row(ids[j]);
          for (int q = 0; q < dim; ++q)
            r[q] -= static_cast<float>(ctx_lr * dh[q]);
        }
      }
    }
    if (epoch_loss) epoch_loss->push_back(loss_n ? loss_sum / loss_n : 0.0);
  }

  for (float v : t.matrix)
    if (!std::isfinite(v)) throw DataError("train_cbow: non-finite embedding");
  return t;
}

EmbeddingTable init_specials(EmbeddingTable table, const CharVocab& vocab,
                             uint64_t seed) {
  if (table.vocab < vocab.size())
    throw DataError("init_specials: table rows do not cover the vocab");
  Rng rng(mix_seed(seed, 0x73706543));
  const double sd = 1.0 / std::sqrt(static_cast<double>(table.dim));
  for (int id = 0; id < table.vocab; ++id) {
    // without counts (e.g. a reloaded file) only the specials are redrawn
    const bool unseen = static_cast<size_t>(id) < table.counts.size() &&
                        table.counts[static_cast<size_t>(id)] == 0;
    if (!CharVocab::is_special(id) && !unseen) continue;
    float* r = table.row(id);
    for (int q = 0; q < table.dim; ++q)
      r[q] = static_cast<float>(rng.normal(0.0, sd));
  }
  return table;
}

}  // namespace embed
}  // namespace seglm
