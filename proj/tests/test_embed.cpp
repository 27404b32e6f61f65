#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "seglm/common.hpp"
#include "seglm/corpus.hpp"
#include "seglm/embed.hpp"
#include "testutil.hpp"

using namespace seglm;

namespace {

std::vector<EncodedLine> encode_all(const CharVocab& vocab,
                                    const std::vector<std::string>& lines) {
  std::vector<EncodedLine> out;
  for (const auto& line : lines)
    out.push_back(corpus::encode_line(vocab, line, false));
  return out;
}

RawCorpus raw(std::vector<std::string> lines) {
  RawCorpus rc;
  rc.lines = std::move(lines);
  return rc;
}

}  // namespace

TEST_CASE("cbow training is deterministic per seed") {
  auto vocab = corpus::build_vocab(raw({"abcabcddd"}));
  auto lines = encode_all(vocab, {"abcabcddd", "dcbadcba", "abcd"});
  auto t1 = embed::train_cbow(lines, vocab, 8, 2, 3, 42);
  auto t2 = embed::train_cbow(lines, vocab, 8, 2, 3, 42);
  auto t3 = embed::train_cbow(lines, vocab, 8, 2, 3, 43);
  CHECK(t1.vocab == vocab.size());
  CHECK(t1.dim == 8);
  CHECK(t1.vocab_hash == vocab.fingerprint());
  REQUIRE(t1.matrix.size() == t2.matrix.size());
  CHECK(std::memcmp(t1.matrix.data(), t2.matrix.data(),
                    t1.matrix.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(t1.matrix.data(), t3.matrix.data(),
                    t1.matrix.size() * sizeof(float)) != 0);
  for (float v : t1.matrix) CHECK(std::isfinite(v));
}

TEST_CASE("cbow records per-id occurrence counts") {
  auto vocab = corpus::build_vocab(raw({"aab"}));
  auto lines = encode_all(vocab, {"aab", "ba"});
  auto t = embed::train_cbow(lines, vocab, 4, 1, 1, 1);
  REQUIRE(t.counts.size() == size_t(vocab.size()));
  CHECK(t.counts[vocab.encode(U'a')] == 3);
  CHECK(t.counts[vocab.encode(U'b')] == 2);
  for (int id = 0; id < CharVocab::kNumSpecials; ++id)
    CHECK(t.counts[id] == 0);
}

TEST_CASE("cbow loss trends downward on a predictable corpus") {
  auto vocab = corpus::build_vocab(raw({"ab"}));
  std::vector<std::string> lines(16, "abababababab");
  auto enc = encode_all(vocab, lines);
  std::vector<double> losses;
  embed::train_cbow(enc, vocab, 8, 1, 12, 7, &losses);
  REQUIRE(losses.size() == 12);
  // With window 1 every context fully determines the centre character, so the
  // objective should fall well below the coin-flip level of ln 2.
  CHECK(losses.back() < losses.front());
  CHECK(losses.back() < 0.5 * std::log(2.0));
}

TEST_CASE("cbow validates its inputs") {
  auto vocab = corpus::build_vocab(raw({"ab"}));
  auto lines = encode_all(vocab, {"ab"});
  CHECK_THROWS_AS(embed::train_cbow({}, vocab, 8, 2, 1, 1), DataError);
  CHECK_THROWS_AS(embed::train_cbow(lines, vocab, 0, 2, 1, 1), DataError);
  CHECK_THROWS_AS(embed::train_cbow(lines, vocab, 8, 0, 1, 1), DataError);
  CHECK_THROWS_AS(embed::train_cbow(lines, vocab, 8, 2, 0, 1), DataError);
  // Single-character lines have no context at all.
  auto lonely = encode_all(vocab, {"a", "b"});
  CHECK_THROWS_AS(embed::train_cbow(lonely, vocab, 8, 2, 1, 1), DataError);
  // Ids outside the vocab are rejected.
  auto bad = lines;
  bad[0].ids[0] = vocab.size();
  CHECK_THROWS_AS(embed::train_cbow(bad, vocab, 8, 2, 1, 1), DataError);
}

TEST_CASE("window never crosses a line break") {
  // In "ab" + "cd" as separate lines, a's context is only b; in the joined
  // line it also includes c. The learned tables must differ.
  auto vocab = corpus::build_vocab(raw({"abcd"}));
  auto split_lines = encode_all(vocab, {"ab", "cd", "ab", "cd"});
  auto joined = encode_all(vocab, {"abcd", "abcd"});
  auto ts = embed::train_cbow(split_lines, vocab, 6, 3, 2, 5);
  auto tj = embed::train_cbow(joined, vocab, 6, 3, 2, 5);
  CHECK(std::memcmp(ts.matrix.data(), tj.matrix.data(),
                    ts.matrix.size() * sizeof(float)) != 0);
}

TEST_CASE("special rows are redrawn and trained rows kept bit-identical") {
  auto vocab = corpus::build_vocab(raw({"abc"}));
  auto lines = encode_all(vocab, {"abc", "cba", "bac"});
  auto trained = embed::train_cbow(lines, vocab, 8, 2, 2, 3);
  auto out = embed::init_specials(trained, vocab, 11);
  for (int id = 0; id < vocab.size(); ++id) {
    const bool keep = !CharVocab::is_special(id) && trained.counts[id] > 0;
    const bool same = std::memcmp(trained.row(id), out.row(id),
                                  sizeof(float) * 8) == 0;
    CHECK(same == keep);
  }
  // Redraws are seed-deterministic.
  auto again = embed::init_specials(trained, vocab, 11);
  CHECK(std::memcmp(again.matrix.data(), out.matrix.data(),
                    out.matrix.size() * sizeof(float)) == 0);
  auto other = embed::init_specials(trained, vocab, 12);
  CHECK(std::memcmp(other.matrix.data(), out.matrix.data(),
                    out.matrix.size() * sizeof(float)) != 0);
}

TEST_CASE("characters absent from the corpus are also redrawn") {
  // Vocab from a superset; train only on lines lacking 'd'.
  auto vocab = corpus::build_vocab(raw({"abcd"}));
  auto lines = encode_all(vocab, {"abc", "cab"});
  auto trained = embed::train_cbow(lines, vocab, 8, 2, 1, 3);
  CHECK(trained.counts[vocab.encode(U'd')] == 0);
  auto out = embed::init_specials(trained, vocab, 9);
  CHECK(std::memcmp(trained.row(vocab.encode(U'd')),
                    out.row(vocab.encode(U'd')), sizeof(float) * 8) != 0);
  CHECK(std::memcmp(trained.row(vocab.encode(U'a')),
                    out.row(vocab.encode(U'a')), sizeof(float) * 8) == 0);
}

TEST_CASE("redrawn rows have the reduced spread of an initializer") {
  auto vocab = corpus::build_vocab(raw({"ab"}));
  auto lines = encode_all(vocab, {"abab"});
  const int dim = 64;
  auto t = embed::init_specials(embed::train_cbow(lines, vocab, dim, 1, 1, 1),
                                vocab, 5);
  // Pool all redrawn entries; their variance should sit near 1/dim.
  double sum = 0, sq = 0;
  int n = 0;
  for (int id = 0; id < CharVocab::kNumSpecials; ++id)
    for (int j = 0; j < dim; ++j) {
      sum += t.row(id)[j];
      sq += double(t.row(id)[j]) * t.row(id)[j];
      ++n;
    }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(mean == doctest::Approx(0.0).scale(1.0).epsilon(0.02));
  CHECK(var == doctest::Approx(1.0 / dim).epsilon(0.35));
}

TEST_CASE("embedding files round trip bit for bit") {
  testutil::TempDir tmp;
  auto vocab = corpus::build_vocab(raw({"abc"}));
  auto lines = encode_all(vocab, {"abc", "bca"});
  auto t = embed::train_cbow(lines, vocab, 8, 2, 1, 2);
  t.save(tmp.file("e.bin"));
  auto back = EmbeddingTable::load(tmp.file("e.bin"));
  CHECK(back.vocab == t.vocab);
  CHECK(back.dim == t.dim);
  CHECK(back.vocab_hash == t.vocab_hash);
  REQUIRE(back.matrix.size() == t.matrix.size());
  CHECK(std::memcmp(back.matrix.data(), t.matrix.data(),
                    t.matrix.size() * sizeof(float)) == 0);
  // Occurrence counts live in memory only.
  CHECK(back.counts.empty());
  // A loaded table therefore only redraws the special rows.
  auto re = embed::init_specials(back, vocab, 4);
  for (int id = CharVocab::kNumSpecials; id < vocab.size(); ++id)
    CHECK(std::memcmp(re.row(id), back.row(id), sizeof(float) * 8) == 0);
  for (int id = 0; id < CharVocab::kNumSpecials; ++id)
    CHECK(std::memcmp(re.row(id), back.row(id), sizeof(float) * 8) != 0);

  CHECK_THROWS_AS(EmbeddingTable::load(tmp.file("missing.bin")), DataError);
  testutil::write_file(tmp.file("junk.bin"), "not an embedding file");
  CHECK_THROWS_AS(EmbeddingTable::load(tmp.file("junk.bin")), DataError);
}
