#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "seglm/corpus.hpp"
#include "seglm/embed.hpp"
#include "seglm/train.hpp"
#include "testutil.hpp"

// Driven end to end through the installed binary.
#ifndef SEGLM_BIN
#error "SEGLM_BIN must point at the command-line tool"
#endif

using namespace seglm;
using testutil::TempDir;
using testutil::read_file;
using testutil::run_cmd;
using testutil::write_file;

namespace {

const std::string kBin = SEGLM_BIN;

std::string q(const std::string& s) { return "'" + s + "'"; }

// A tiny but learnable corpus: short words over a few characters.
void write_toy_corpus(const std::string& path, int lines, int shift = 0) {
  static const char* words[] = {"ba", "dec", "fa",  "cab", "ed",
                                "fad", "be", "ace", "dab", "fee"};
  std::string text;
  Rng rng(17 + shift);
  for (int i = 0; i < lines; ++i) {
    const int n = 2 + static_cast<int>(rng.uniform_int(3));
    for (int w = 0; w < n; ++w) {
      if (w) text += ' ';
      text += words[rng.uniform_int(10)];
    }
    text += '\n';
  }
  write_file(path, text);
}

std::string tune_flags(int warmup = 1) {
  return " --steps 4 --warmup " + std::to_string(warmup) +
         " --peak-lr 1e-3 --encoder-dropout 0"
         " --other-dropout 0 --batch-size 2 --checkpoint-every 2";
}

std::string train_flags(int warmup = 1) {
  return " --layers 1 --d-model 16 --d-ff 32 --heads 2 --max-seg-len 3" +
         tune_flags(warmup);
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  std::string out;
  CHECK(run_cmd(kBin, &out) == 2);
  CHECK(run_cmd(kBin + " no-such-command", &out) == 2);
  CHECK(run_cmd(kBin + " stats --no-such-flag x", &out) == 2);
  CHECK(run_cmd(kBin + " stats", &out) == 2);  // missing required option
  CHECK(run_cmd(kBin + " --help", &out) == 0);
  for (const char* cmd : {"preprocess", "stats", "embed-init", "pretrain",
                          "finetune", "segment", "evaluate", "sweep", "ladder"})
    CHECK(out.find(cmd) != std::string::npos);
}

TEST_CASE("preprocess cleans, deduplicates and reports") {
  TempDir tmp;
  write_file(tmp.file("in.txt"),
             "good line here\n"
             "spam at http://junk.example\n"
             "good line here\n"
             "1234 5678\n"
             "another keeper\n");
  std::string out;
  const int rc = run_cmd(kBin + " preprocess --in " + q(tmp.file("in.txt")) +
                             " --out " + q(tmp.file("clean.txt")) +
                             " --vocab-out " + q(tmp.file("vocab.txt")) +
                             " --drop-urls --drop-no-alpha --dedupe",
                         &out);
  CHECK(rc == 0);
  CHECK(out.find("wrote 2 lines") != std::string::npos);
  CHECK(read_file(tmp.file("clean.txt")) ==
        "good line here\nanother keeper\n");
  auto vocab = CharVocab::load(tmp.file("vocab.txt"));
  CHECK(vocab.contains(U'g'));
  CHECK(!vocab.contains(U'1'));
}

TEST_CASE("preprocess seeded downsampling follows flag and environment") {
  TempDir tmp;
  write_toy_corpus(tmp.file("in.txt"), 40);
  auto sample = [&](const std::string& prefix, const std::string& extra,
                    const std::string& out_name) {
    std::string out;
    const int rc = run_cmd(prefix + kBin + " preprocess --in " +
                               q(tmp.file("in.txt")) + " --out " +
                               q(tmp.file(out_name)) + " --downsample 10" +
                               extra,
                           &out);
    REQUIRE(rc == 0);
    return read_file(tmp.file(out_name));
  };
  const auto a = sample("", " --seed 7", "a.txt");
  const auto b = sample("", " --seed 7", "b.txt");
  const auto c = sample("", " --seed 8", "c.txt");
  CHECK(a == b);
  CHECK(a != c);
  // Environment variable supplies the seed; an explicit flag beats it.
  const auto d = sample("SEGLM_SEED=7 ", "", "d.txt");
  CHECK(d == a);
  const auto e = sample("SEGLM_SEED=8 ", " --seed 7", "e.txt");
  CHECK(e == a);
}

TEST_CASE("stats summarizes a corpus") {
  TempDir tmp;
  write_file(tmp.file("in.txt"), "ab ab\ncde\n");
  std::string out;
  CHECK(run_cmd(kBin + " stats --in " + q(tmp.file("in.txt")), &out) == 0);
  CHECK(out.find("lines\t2") != std::string::npos);
  CHECK(out.find("tokens\t3") != std::string::npos);
  CHECK(out.find("characters\t7") != std::string::npos);
  CHECK(run_cmd(kBin + " stats --in " + q(tmp.file("nope.txt"))) == 3);
}

TEST_CASE("embed-init writes a loadable embedding table") {
  TempDir tmp;
  write_toy_corpus(tmp.file("in.txt"), 20);
  std::string out;
  int rc = run_cmd(kBin + " preprocess --in " + q(tmp.file("in.txt")) +
                   " --out " + q(tmp.file("c.txt")) + " --vocab-out " +
                   q(tmp.file("v.txt")));
  REQUIRE(rc == 0);
  rc = run_cmd(kBin + " embed-init --in " + q(tmp.file("c.txt")) +
                   " --vocab " + q(tmp.file("v.txt")) + " --out " +
                   q(tmp.file("emb.bin")) + " --dim 16 --window 2 --epochs 2",
               &out);
  CHECK(rc == 0);
  auto table = EmbeddingTable::load(tmp.file("emb.bin"));
  CHECK(table.dim == 16);
  CHECK(table.vocab == CharVocab::load(tmp.file("v.txt")).size());
  for (float v : table.matrix) CHECK(std::isfinite(v));
}

TEST_CASE("pretrain, segment and evaluate compose into a pipeline") {
  TempDir tmp;
  write_toy_corpus(tmp.file("train.txt"), 24);
  write_toy_corpus(tmp.file("val.txt"), 8, 1);

  std::string out;
  int rc = run_cmd(kBin + " pretrain --train " + q(tmp.file("train.txt")) +
                       " --val " + q(tmp.file("val.txt")) + " --out " +
                       q(tmp.file("run")) + " --seed 5" + train_flags(),
                   &out);
  REQUIRE(rc == 0);
  CHECK(out.find("best step") != std::string::npos);
  CHECK(testutil::fs::exists(tmp.file("run/best.ckpt")));
  CHECK(testutil::fs::exists(tmp.file("run/last.ckpt")));
  CHECK(testutil::fs::exists(tmp.file("run/vocab.txt")));
  const auto metrics = read_file(tmp.file("run/metrics.tsv"));
  CHECK(metrics.find("step\ttrain_bpc\tval_bpc") == 0);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);  // header + 2

  // Segment keeps blank lines and line count.
  write_file(tmp.file("inp.txt"), "badec\n\nfacab\n");
  rc = run_cmd(kBin + " segment --ckpt " + q(tmp.file("run/best.ckpt")) +
                   " --in " + q(tmp.file("inp.txt")) + " --out " +
                   q(tmp.file("seg.txt")),
               &out);
  REQUIRE(rc == 0);
  const auto seg = read_file(tmp.file("seg.txt"));
  CHECK(std::count(seg.begin(), seg.end(), '\n') == 3);
  CHECK(seg.find("\n\n") != std::string::npos);  // blank line survived
  std::string squeezed;
  for (char ch : seg)
    if (ch != ' ' && ch != '\n') squeezed += ch;
  CHECK(squeezed == "badecfacab");

  // A segmentation scored against itself is perfect.
  rc = run_cmd(kBin + " evaluate --pred " + q(tmp.file("seg.txt")) +
                   " --gold " + q(tmp.file("seg.txt")),
               &out);
  REQUIRE(rc == 0);
  CHECK(out.find("P\tR\tF1\tMCC\tlines") != std::string::npos);
  CHECK(out.find("1.000000\t1.000000\t1.000000") != std::string::npos);

  // Structural mismatches surface as data errors.
  write_file(tmp.file("short.txt"), "badec\n");
  CHECK(run_cmd(kBin + " evaluate --pred " + q(tmp.file("short.txt")) +
                " --gold " + q(tmp.file("seg.txt"))) == 3);
  CHECK(run_cmd(kBin + " evaluate --pred " + q(tmp.file("missing.txt")) +
                " --gold " + q(tmp.file("seg.txt"))) == 3);

  // Fine-tuning continues from the checkpoint, extending the vocab on demand.
  write_file(tmp.file("ft.txt"), "zab zab\nbad zab\nfaz bad\nzab bad\n");
  write_file(tmp.file("ftval.txt"), "zab bad\nfaz zab\n");
  rc = run_cmd(kBin + " finetune --ckpt " + q(tmp.file("run/best.ckpt")) +
                   " --train " + q(tmp.file("ft.txt")) + " --val " +
                   q(tmp.file("ftval.txt")) + " --out " + q(tmp.file("ft")) +
                   " --seed 6" + tune_flags(),
               &out);
  REQUIRE(rc == 0);
  CHECK(testutil::fs::exists(tmp.file("ft/best.ckpt")));
  // The fine-tuned model knows the new character.
  auto grown = Checkpoint::load(tmp.file("ft/best.ckpt"));
  CHECK(grown.vocab.contains(U'z'));
  auto base = Checkpoint::load(tmp.file("run/best.ckpt"));
  CHECK(!base.vocab.contains(U'z'));
  CHECK(grown.config.vocab_size == base.config.vocab_size + 1);

  // A corrupted starting point dies with the divergence status.
  auto bad = Checkpoint::load(tmp.file("run/best.ckpt"));
  bad.params.embed.data()[0] = std::nanf("");
  bad.save(tmp.file("bad.ckpt"));
  CHECK(run_cmd(kBin + " finetune --ckpt " + q(tmp.file("bad.ckpt")) +
                    " --train " + q(tmp.file("ft.txt")) + " --val " +
                    q(tmp.file("ftval.txt")) + " --out " + q(tmp.file("ftbad")) +
                    tune_flags(),
                &out) == 4);
}

TEST_CASE("dry runs validate without training") {
  TempDir tmp;
  write_toy_corpus(tmp.file("train.txt"), 8);
  write_toy_corpus(tmp.file("val.txt"), 4, 1);
  std::string out;
  const int rc = run_cmd(
      kBin + " pretrain --train " + q(tmp.file("train.txt")) + " --val " +
          q(tmp.file("val.txt")) + " --out " + q(tmp.file("run")) +
          " --dry-run" + train_flags(),
      &out);
  CHECK(rc == 0);
  CHECK(out.find("config ok") != std::string::npos);
  CHECK(!testutil::fs::exists(tmp.file("run")));
  // Required inputs are still enforced.
  CHECK(run_cmd(kBin + " pretrain --dry-run" + train_flags()) == 2);
  // An invalid hyper-parameter (warmup beyond the step budget) fails
  // validation.
  CHECK(run_cmd(kBin + " pretrain --train " + q(tmp.file("train.txt")) +
                " --val " + q(tmp.file("val.txt")) + " --out " +
                q(tmp.file("run")) + " --dry-run" + train_flags(9)) == 3);
}

TEST_CASE("experiment config files feed the training commands") {
  TempDir tmp;
  write_toy_corpus(tmp.file("train.txt"), 12);
  write_toy_corpus(tmp.file("val.txt"), 4, 1);
  write_file(tmp.file("exp.cfg"),
             "[data]\n"
             "train = train.txt\n"
             "val = val.txt\n"
             "[model]\n"
             "layers = 1\n"
             "d_model = 16\n"
             "d_ff = 32\n"
             "heads = 2\n"
             "max_seg_len = 3\n"
             "[train]\n"
             "steps = 4\n"
             "warmup_steps = 1\n"
             "peak_lr = 1e-3\n"
             "encoder_dropout = 0\n"
             "other_dropout = 0\n"
             "batch_size = 2\n"
             "checkpoint_every = 2\n"
             "[output]\n"
             "dir = run\n");
  std::string out;
  int rc = run_cmd("cd " + q(tmp.path().string()) + " && " + kBin +
                       " pretrain --config exp.cfg",
                   &out);
  CHECK(rc == 0);
  CHECK(testutil::fs::exists(tmp.file("run/best.ckpt")));

  write_file(tmp.file("bad.cfg"), "[train]\nnot_a_key = 1\n");
  CHECK(run_cmd(kBin + " pretrain --config " + q(tmp.file("bad.cfg"))) == 3);
  write_file(tmp.file("bad2.cfg"), "[data]\ntrain = missing-file.txt\n");
  CHECK(run_cmd(kBin + " pretrain --config " + q(tmp.file("bad2.cfg"))) == 3);
}

TEST_CASE("sweep writes a grid report") {
  TempDir tmp;
  write_toy_corpus(tmp.file("train.txt"), 12);
  write_toy_corpus(tmp.file("val.txt"), 4, 1);
  std::string out;
  const int rc = run_cmd(
      kBin + " sweep --train " + q(tmp.file("train.txt")) + " --val " +
          q(tmp.file("val.txt")) + " --lrs 1e-3,5e-4 --dropouts 0 --out " +
          q(tmp.file("sweep.tsv")) + train_flags(),
      &out);
  REQUIRE(rc == 0);
  const auto tsv = read_file(tmp.file("sweep.tsv"));
  CHECK(tsv.find("lr\tencoder_dropout\tstatus") == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') >= 3);
  CHECK(tsv.find("# winner") != std::string::npos);
}

TEST_CASE("ladder reports one row per subset size") {
  TempDir tmp;
  write_toy_corpus(tmp.file("train.txt"), 24);
  write_toy_corpus(tmp.file("val.txt"), 6, 1);
  std::string out;
  int rc = run_cmd(kBin + " pretrain --train " + q(tmp.file("train.txt")) +
                       " --val " + q(tmp.file("val.txt")) + " --out " +
                       q(tmp.file("run")) + train_flags(),
                   &out);
  REQUIRE(rc == 0);
  rc = run_cmd(kBin + " ladder --ckpt " + q(tmp.file("run/best.ckpt")) +
                   " --train " + q(tmp.file("train.txt")) + " --val " +
                   q(tmp.file("val.txt")) + " --sizes 0,6 --out " +
                   q(tmp.file("ladder.tsv")) +
                   " --steps 4 --warmup 1 --peak-lr 1e-3 --encoder-dropout 0"
                   " --other-dropout 0 --batch-size 2 --checkpoint-every 2",
               &out);
  REQUIRE(rc == 0);
  const auto tsv = read_file(tmp.file("ladder.tsv"));
  CHECK(tsv.find("size\tbest_val_bpc\tf1") == 0);
  CHECK(tsv.find("\n0\t") != std::string::npos);
  CHECK(tsv.find("\n6\t") != std::string::npos);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 3);
  // The dry run only checks the plan.
  CHECK(run_cmd(kBin + " ladder --ckpt " + q(tmp.file("run/best.ckpt")) +
                " --train " + q(tmp.file("train.txt")) + " --val " +
                q(tmp.file("val.txt")) + " --sizes 0,6 --dry-run") == 0);
}
