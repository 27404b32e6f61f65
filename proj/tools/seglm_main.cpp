// seglm: character segmentation toolkit.
// Subcommands cover the full pipeline: corpus preparation, embedding
// initialization, pre-training, fine-tuning, segmentation, scoring,
// hyperparameter sweeps, and data-size ladders.
// Exit codes: 0 ok, 2 usage, 3 bad data, 4 numeric divergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "seglm/config.hpp"
#include "seglm/corpus.hpp"
#include "seglm/embed.hpp"
#include "seglm/eval.hpp"
#include "seglm/kernels.hpp"
#include "seglm/model.hpp"
#include "seglm/text.hpp"
#include "seglm/train.hpp"

namespace fs = std::filesystem;
using namespace seglm;

namespace {

uint64_t env_seed(uint64_t fallback) {
  const char* s = std::getenv("SEGLM_SEED");
  if (!s || !*s) return fallback;
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw DataError("SEGLM_SEED is not an integer: " + std::string(s));
  }
}

bool blank(const std::string& line) {
  for (char32_t cp : utf8_decode(line))
    if (!is_space(cp)) return false;
  return true;
}

std::vector<EncodedLine> encode_corpus(const CharVocab& vocab,
                                       const RawCorpus& rc, bool gold) {
  std::vector<EncodedLine> out;
  out.reserve(rc.lines.size());
  for (const auto& line : rc.lines) {
    if (blank(line)) continue;
    out.push_back(corpus::encode_line(vocab, line, gold));
  }
  return out;
}

struct ModelFlags {
  ModelConfig cfg;
  void attach(CLI::App* cmd) {
    cmd->add_option("--layers", cfg.layers, "blocks per direction");
    cmd->add_option("--d-model", cfg.d_model, "hidden width");
    cmd->add_option("--d-ff", cfg.d_ff, "feed-forward width");
    cmd->add_option("--heads", cfg.heads, "attention heads");
    cmd->add_option("--max-seg-len", cfg.max_seg_len,
                    "maximum segment length k");
    cmd->add_option("--max-len", cfg.max_len, "longest encodable line");
  }
};

struct TrainFlags {
  TrainConfig cfg;
  void attach(CLI::App* cmd) {
    cmd->add_option("--steps", cfg.steps, "optimizer steps");
    cmd->add_option("--warmup", cfg.warmup_steps, "linear warmup steps");
    cmd->add_option("--peak-lr", cfg.peak_lr, "peak learning rate");
    cmd->add_option("--encoder-dropout", cfg.encoder_dropout,
                    "encoder dropout rate");
    cmd->add_option("--other-dropout", cfg.other_dropout,
                    "embedding/decoder-input dropout rate");
    cmd->add_option("--batch-size", cfg.batch_size, "lines per step");
    cmd->add_option("--checkpoint-every", cfg.checkpoint_every,
                    "steps between checkpoints");
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

// Shared by pretrain and finetune: run, persist artifacts, report.
void run_and_save(const TrainConfig& tc, const ModelConfig& mc,
                  const CharVocab& vocab,
                  const std::vector<EncodedLine>& train_lines,
                  const std::vector<EncodedLine>& val_lines,
                  const train::RunOptions& base_opts,
                  const std::string& out_dir, bool log_mcc) {
  fs::create_directories(out_dir);
  std::ofstream metrics(out_dir + "/metrics.tsv");
  metrics << (log_mcc ? "step\ttrain_bpc\tval_bpc\tmcc\n"
                      : "step\ttrain_bpc\tval_bpc\n");
  train::RunOptions opts = base_opts;
  opts.metrics = &metrics;
  opts.mcc_val = log_mcc ? &val_lines : nullptr;

  auto cks = train::train_run(tc, mc, vocab, train_lines, val_lines, opts);
  const Checkpoint& best = train::select_best(cks);
  best.save(out_dir + "/best.ckpt");
  cks.back().save(out_dir + "/last.ckpt");
  vocab.save(out_dir + "/vocab.txt");
  std::cout << "checkpoints: " << cks.size() << "\n"
            << "best step: " << best.step << " (val bpc "
            << best.val_bpc << ")\n"
            << "saved: " << out_dir << "/best.ckpt\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"character segmentation toolkit"};
  app.require_subcommand(1);
  uint64_t seed = env_seed(1);
  app.add_option("--seed", seed, "seed for all randomness")
      ->envname("SEGLM_SEED");

  // ---- preprocess ----
  auto* pre = app.add_subcommand("preprocess", "clean and assemble corpora");
  std::vector<std::string> pre_in;
  std::vector<std::string> pre_tags;
  std::string pre_out, pre_vocab_out, pre_overlap, pre_blocklist;
  CleaningRules rules;
  int pre_max_chars = 0;
  int64_t pre_downsample = 0;
  bool pre_dedupe = false;
  pre->add_option("--in", pre_in, "input text files")->required();
  pre->add_option("--tag", pre_tags, "source tag per input (optional)");
  pre->add_option("--out", pre_out, "output corpus file")->required();
  pre->add_option("--vocab-out", pre_vocab_out, "write the vocab here");
  pre->add_flag("--drop-urls", rules.drop_urls, "drop lines containing URLs");
  pre->add_flag("--drop-no-alpha", rules.drop_no_alpha,
                "drop lines without a single letter");
  pre->add_flag("--drop-mostly-non-alpha", rules.drop_mostly_non_alpha,
                "drop lines whose letter fraction is below the threshold");
  pre->add_option("--min-alpha-fraction", rules.min_alpha_fraction,
                  "letter-fraction threshold (default 0.5)");
  pre->add_option("--blocklist-file", pre_blocklist,
                  "file of substrings; matching lines are dropped");
  pre->add_option("--max-chars", pre_max_chars,
                  "split lines longer than this many characters");
  pre->add_flag("--dedupe", pre_dedupe, "drop exact duplicate lines");
  pre->add_option("--overlap", pre_overlap,
                  "drop lines that also appear in this file");
  pre->add_option("--downsample", pre_downsample,
                  "keep a seeded random subset of this many lines");
  pre->callback([&]() {
    if (!pre_blocklist.empty()) {
      RawCorpus bl = corpus::read_corpus(pre_blocklist);
      for (const auto& l : bl.lines)
        if (!blank(l)) rules.blocklist.push_back(l);
    }
    std::vector<RawCorpus> parts;
    for (size_t i = 0; i < pre_in.size(); ++i) {
      RawCorpus rc = corpus::read_corpus(
          pre_in[i], i < pre_tags.size() ? pre_tags[i] : "");
      parts.push_back(std::move(rc));
    }
    RawCorpus all = parts.size() == 1 ? std::move(parts[0])
                                      : corpus::concat_corpora(parts);
    all = corpus::clean_lines(all, rules);
    if (pre_max_chars > 0) all = corpus::split_long_lines(all, pre_max_chars);
    if (pre_dedupe) all = corpus::dedupe(all);
    if (!pre_overlap.empty())
      all = corpus::remove_overlap(all, corpus::read_corpus(pre_overlap));
    if (pre_downsample > 0) all = corpus::downsample(all, pre_downsample, seed);
    corpus::write_corpus(all, pre_out);
    if (!pre_vocab_out.empty()) corpus::build_vocab(all).save(pre_vocab_out);
    std::cout << "wrote " << all.lines.size() << " lines to " << pre_out
              << "\n";
  });

  // ---- stats ----
  auto* st = app.add_subcommand("stats", "corpus summary");
  std::string st_in;
  st->add_option("--in", st_in, "corpus file")->required();
  st->callback([&]() {
    const StatsReport r = corpus::corpus_stats(corpus::read_corpus(st_in));
    std::cout << "lines\t" << r.lines << "\ntokens\t" << r.total_tokens
              << "\nunique tokens\t" << r.unique_tokens << "\ncharacters\t"
              << r.total_characters << "\nunique characters\t"
              << r.unique_characters << "\nmean token length\t"
              << r.mean_token_length << "\n";
  });

  // ---- embed-init ----
  auto* em = app.add_subcommand("embed-init",
                                "train context embeddings for initialization");
  std::string em_in, em_vocab, em_out;
  int em_dim = 256, em_window = 5, em_epochs = 32;
  em->add_option("--in", em_in, "training corpus")->required();
  em->add_option("--vocab", em_vocab, "vocab file")->required();
  em->add_option("--out", em_out, "embedding output file")->required();
  em->add_option("--dim", em_dim, "embedding width");
  em->add_option("--window", em_window, "context window");
  em->add_option("--epochs", em_epochs, "training epochs");
  em->callback([&]() {
    const CharVocab vocab = CharVocab::load(em_vocab);
    auto lines = encode_corpus(vocab, corpus::read_corpus(em_in), false);
    EmbeddingTable t =
        embed::train_cbow(lines, vocab, em_dim, em_window, em_epochs, seed);
    t = embed::init_specials(std::move(t), vocab, seed);
    t.save(em_out);
    std::cout << "wrote " << t.vocab << "x" << t.dim << " embeddings to "
              << em_out << "\n";
  });

  // ---- pretrain ----
  auto* pt = app.add_subcommand("pretrain", "train a model from scratch");
  std::string pt_train, pt_val, pt_vocab, pt_emb, pt_out, pt_config;
  bool pt_dry = false, pt_mcc = false;
  ModelFlags pt_model;
  TrainFlags pt_tc;
  pt->add_option("--train", pt_train, "training corpus");
  pt->add_option("--val", pt_val, "validation corpus");
  pt->add_option("--vocab", pt_vocab, "vocab file (default: built from train)");
  pt->add_option("--embeddings", pt_emb, "embedding init file");
  pt->add_option("--out", pt_out, "output directory");
  pt->add_option("--config", pt_config, "experiment config file");
  pt->add_flag("--dry-run", pt_dry, "validate inputs and exit");
  pt->add_flag("--mcc", pt_mcc, "log boundary MCC per checkpoint (needs "
                                "gold whitespace in --val)");
  pt_model.attach(pt);
  pt_tc.attach(pt);
  pt->callback([&]() {
    if (!pt_config.empty()) {
      const ExperimentConfig ec = ExperimentConfig::load(pt_config);
      ec.apply_model(&pt_model.cfg);
      ec.apply_train(&pt_tc.cfg);
      if (pt_train.empty()) pt_train = ec.get("data.train", "");
      if (pt_val.empty()) pt_val = ec.get("data.val", "");
      if (pt_vocab.empty()) pt_vocab = ec.get("data.vocab", "");
      if (pt_emb.empty()) pt_emb = ec.get("data.embeddings", "");
      if (pt_out.empty()) pt_out = ec.get("output.dir", "");
    }
    if (pt_train.empty() || pt_val.empty() || pt_out.empty())
      throw CLI::RequiredError("--train, --val and --out (or config keys)");
    pt_tc.cfg.seed = seed;
    RawCorpus train_rc = corpus::read_corpus(pt_train);
    const CharVocab vocab = pt_vocab.empty()
                                ? corpus::build_vocab(train_rc)
                                : CharVocab::load(pt_vocab);
    pt_model.cfg.vocab_size = vocab.size();
    pt_model.cfg.validate();
    pt_tc.cfg.validate();
    if (pt_dry) {
      std::cout << "config ok: vocab " << vocab.size() << ", "
                << pt_tc.cfg.steps << " steps\n";
      return;
    }
    auto train_lines = encode_corpus(vocab, train_rc, false);
    auto val_lines =
        encode_corpus(vocab, corpus::read_corpus(pt_val), pt_mcc);
    EmbeddingTable emb;
    train::RunOptions opts;
    if (!pt_emb.empty()) {
      emb = EmbeddingTable::load(pt_emb);
      opts.embeddings = &emb;
    }
    run_and_save(pt_tc.cfg, pt_model.cfg, vocab, train_lines, val_lines, opts,
                 pt_out, pt_mcc);
  });

  // ---- finetune ----
  auto* ft = app.add_subcommand("finetune",
                                "continue training from a checkpoint");
  std::string ft_ckpt, ft_train, ft_val, ft_out, ft_config;
  bool ft_dry = false, ft_mcc = false;
  TrainFlags ft_tc;
  ft_tc.cfg.steps = 8192;
  ft_tc.cfg.checkpoint_every = 128;
  ft->add_option("--ckpt", ft_ckpt, "starting checkpoint");
  ft->add_option("--train", ft_train, "target-language training corpus");
  ft->add_option("--val", ft_val, "target-language validation corpus");
  ft->add_option("--out", ft_out, "output directory");
  ft->add_option("--config", ft_config, "experiment config file");
  ft->add_flag("--dry-run", ft_dry, "validate inputs and exit");
  ft->add_flag("--mcc", ft_mcc, "log boundary MCC per checkpoint");
  ft_tc.attach(ft);
  ft->callback([&]() {
    if (!ft_config.empty()) {
      const ExperimentConfig ec = ExperimentConfig::load(ft_config);
      ec.apply_train(&ft_tc.cfg);
      if (ft_ckpt.empty()) ft_ckpt = ec.get("data.checkpoint", "");
      if (ft_train.empty()) ft_train = ec.get("data.train", "");
      if (ft_val.empty()) ft_val = ec.get("data.val", "");
      if (ft_out.empty()) ft_out = ec.get("output.dir", "");
    }
    if (ft_ckpt.empty() || ft_train.empty() || ft_val.empty() ||
        ft_out.empty())
      throw CLI::RequiredError("--ckpt, --train, --val and --out");
    ft_tc.cfg.seed = seed;
    ft_tc.cfg.mode = TrainConfig::Mode::kFinetune;
    ft_tc.cfg.validate();
    if (ft_dry) {
      std::cout << "config ok: " << ft_tc.cfg.steps << " steps\n";
      return;
    }
    Checkpoint ckpt = Checkpoint::load(ft_ckpt);
    RawCorpus train_rc = corpus::read_corpus(ft_train);
    auto [merged, new_ids] = corpus::extend_vocab(ckpt.vocab, train_rc);
    Checkpoint start = train::extend_for_vocab(ckpt, merged, seed);
    auto train_lines = encode_corpus(merged, train_rc, false);
    auto val_lines =
        encode_corpus(merged, corpus::read_corpus(ft_val), ft_mcc);
    train::RunOptions opts;
    opts.init = &start;
    run_and_save(ft_tc.cfg, start.config, merged, train_lines, val_lines,
                 opts, ft_out, ft_mcc);
  });

  // ---- segment ----
  auto* sg = app.add_subcommand("segment", "segment a text file");
  std::string sg_ckpt, sg_in, sg_out;
  sg->add_option("--ckpt", sg_ckpt, "checkpoint")->required();
  sg->add_option("--in", sg_in, "input text, one sentence per line")
      ->required();
  sg->add_option("--out", sg_out, "segmented output")->required();
  sg->callback([&]() {
    const Checkpoint ckpt = Checkpoint::load(sg_ckpt);
    RawCorpus rc = corpus::read_corpus(sg_in);
    std::string out;
    for (const auto& line : rc.lines) {
      if (!blank(line)) {
        out += segment_line(ckpt.params, ckpt.config, ckpt.vocab, line);
      }
      out += '\n';
    }
    write_text(sg_out, out);
    std::cout << "segmented " << rc.lines.size() << " lines into " << sg_out
              << "\n";
  });

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "score a segmentation");
  std::string ev_pred, ev_gold;
  ev->add_option("--pred", ev_pred, "predicted segmentation file")->required();
  ev->add_option("--gold", ev_gold, "gold segmentation file")->required();
  ev->callback([&]() {
    const EvalReport r = eval::evaluate(ev_pred, ev_gold);
    std::cout << r.human() << "\n" << r.machine();
  });

  // ---- sweep ----
  auto* sw = app.add_subcommand("sweep", "grid over learning rate x dropout");
  std::string sw_train, sw_val, sw_vocab, sw_out, sw_config;
  std::string sw_lrs, sw_drops;
  bool sw_dry = false, sw_gold = false;
  int sw_jobs = 1;
  ModelFlags sw_model;
  TrainFlags sw_tc;
  sw->add_option("--train", sw_train, "training corpus");
  sw->add_option("--val", sw_val, "validation corpus");
  sw->add_option("--vocab", sw_vocab, "vocab file (default: built from train)");
  sw->add_option("--lrs", sw_lrs, "comma-separated learning rates");
  sw->add_option("--dropouts", sw_drops, "comma-separated encoder dropouts");
  sw->add_option("--out", sw_out, "report file (default: stdout)");
  sw->add_option("--config", sw_config, "experiment config file");
  sw->add_option("--jobs", sw_jobs, "parallel runs");
  sw->add_flag("--gold-f1", sw_gold,
               "score each best checkpoint's F1 against --val's whitespace");
  sw->add_flag("--dry-run", sw_dry, "validate inputs and exit");
  sw_model.attach(sw);
  sw_tc.attach(sw);
  sw->callback([&]() {
    train::SweepGrid grid;
    if (!sw_config.empty()) {
      const ExperimentConfig ec = ExperimentConfig::load(sw_config);
      ec.apply_model(&sw_model.cfg);
      ec.apply_train(&sw_tc.cfg);
      if (sw_train.empty()) sw_train = ec.get("data.train", "");
      if (sw_val.empty()) sw_val = ec.get("data.val", "");
      if (sw_vocab.empty()) sw_vocab = ec.get("data.vocab", "");
      if (sw_lrs.empty() && ec.has("sweep.learning_rates"))
        grid = ec.sweep_grid();
    }
    auto parse_list = [](const std::string& text, const char* what) {
      std::vector<double> out;
      std::istringstream in(text);
      std::string item;
      while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(std::stod(item));
      if (out.empty())
        throw DataError(std::string("sweep: no ") + what + " given");
      return out;
    };
    if (!sw_lrs.empty()) {
      grid.learning_rates = parse_list(sw_lrs, "learning rates");
      grid.encoder_dropouts.clear();
      for (double d : parse_list(sw_drops, "dropout rates"))
        grid.encoder_dropouts.push_back(static_cast<float>(d));
    }
    if (sw_train.empty() || sw_val.empty() || grid.learning_rates.empty())
      throw CLI::RequiredError("--train, --val and --lrs/--dropouts");
    sw_tc.cfg.seed = seed;
    RawCorpus train_rc = corpus::read_corpus(sw_train);
    const CharVocab vocab = sw_vocab.empty()
                                ? corpus::build_vocab(train_rc)
                                : CharVocab::load(sw_vocab);
    sw_model.cfg.vocab_size = vocab.size();
    sw_model.cfg.validate();
    sw_tc.cfg.validate();
    if (sw_dry) {
      std::cout << "config ok: " << grid.learning_rates.size() << "x"
                << grid.encoder_dropouts.size() << " grid\n";
      return;
    }
    auto train_lines = encode_corpus(vocab, train_rc, false);
    auto val_lines =
        encode_corpus(vocab, corpus::read_corpus(sw_val), sw_gold);
    const auto report =
        train::sweep(grid, sw_tc.cfg, sw_model.cfg, vocab, train_lines,
                     val_lines, sw_gold, sw_jobs);
    if (sw_out.empty())
      std::cout << report.tsv();
    else
      write_text(sw_out, report.tsv());
  });

  // ---- ladder ----
  auto* ld = app.add_subcommand(
      "ladder", "fine-tune on nested target subsets and score each size");
  std::string ld_ckpt, ld_train, ld_val, ld_sizes, ld_out;
  bool ld_dry = false;
  TrainFlags ld_tc;
  ld_tc.cfg.steps = 4096;
  ld_tc.cfg.warmup_steps = 512;
  ld_tc.cfg.checkpoint_every = 64;
  ld->add_option("--ckpt", ld_ckpt, "pre-trained checkpoint")->required();
  ld->add_option("--train", ld_train, "target training corpus")->required();
  ld->add_option("--val", ld_val, "gold-segmented validation corpus")
      ->required();
  ld->add_option("--sizes", ld_sizes,
                 "comma-separated subset sizes (0 = zero-shot row)")
      ->required();
  ld->add_option("--out", ld_out, "report file (default: stdout)");
  ld->add_flag("--dry-run", ld_dry, "validate inputs and exit");
  ld_tc.attach(ld);
  ld->callback([&]() {
    std::vector<int64_t> sizes;
    {
      std::istringstream in(ld_sizes);
      std::string item;
      while (std::getline(in, item, ','))
        if (!item.empty()) sizes.push_back(std::stoll(item));
    }
    if (sizes.empty()) throw DataError("ladder: no sizes given");
    ld_tc.cfg.seed = seed;
    ld_tc.cfg.mode = TrainConfig::Mode::kFinetune;
    ld_tc.cfg.validate();
    if (ld_dry) {
      std::cout << "config ok: " << sizes.size() << " sizes\n";
      return;
    }
    const Checkpoint ckpt = Checkpoint::load(ld_ckpt);
    RawCorpus train_rc = corpus::read_corpus(ld_train);
    RawCorpus val_rc = corpus::read_corpus(ld_val);

    std::string report = "size\tbest_val_bpc\tf1\n";
    char buf[128];
    for (int64_t size : sizes) {
      if (size == 0) {
        auto val_gold = encode_corpus(ckpt.vocab, val_rc, true);
        const double zb =
            train::corpus_bpc(ckpt.params, ckpt.config, val_gold);
        const double f1 =
            train::segmentation_f1(ckpt.params, ckpt.config, val_gold);
        std::snprintf(buf, sizeof(buf), "0\t%.6f\t%.6f\n", zb, f1);
        report += buf;
        std::cout << buf << std::flush;
        continue;
      }
      RawCorpus subset = corpus::downsample(train_rc, size, seed);
      auto [merged, new_ids] = corpus::extend_vocab(ckpt.vocab, subset);
      Checkpoint start = train::extend_for_vocab(ckpt, merged, seed);
      auto train_lines = encode_corpus(merged, subset, false);
      auto val_gold = encode_corpus(merged, val_rc, true);
      train::RunOptions opts;
      opts.init = &start;
      auto cks = train::train_run(ld_tc.cfg, start.config, merged, train_lines,
                                  val_gold, opts);
      const Checkpoint& best = train::select_best(cks);
      const double f1 =
          train::segmentation_f1(best.params, best.config, val_gold);
      std::snprintf(buf, sizeof(buf), "%lld\t%.6f\t%.6f\n",
                    static_cast<long long>(size), best.val_bpc, f1);
      report += buf;
      std::cout << buf << std::flush;
    }
    if (!ld_out.empty()) write_text(ld_out, report);
  });

  // Let global flags (--seed) appear after the subcommand name too.
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
