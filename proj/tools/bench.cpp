// Times the compute kernels in serial vs OpenMP mode, plus a whole
// training step at toy scale. Build target `seglm_bench`; not a test.

#include <chrono>
#include <cstdio>
#include <vector>

#include "seglm/corpus.hpp"
#include "seglm/kernels.hpp"
#include "seglm/model.hpp"
#include "seglm/tensor.hpp"

using namespace seglm;
using Clock = std::chrono::steady_clock;

namespace {

double secs(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, secs(t0, Clock::now()));
  }
  return best;
}

void row(const char* name, double serial, double parallel) {
  std::printf("%-28s %10.3f ms %10.3f ms %7.2fx\n", name, serial * 1e3,
              parallel * 1e3, parallel > 0 ? serial / parallel : 0.0);
}

}  // namespace

int main() {
  std::printf("%-28s %13s %13s %8s\n", "kernel", "serial", "openmp",
              "speedup");

  {
    const int m = 256, k = 256, n = 512;
    std::vector<float> a(m * k), b(k * n), c(m * n);
    Rng rng(7);
    for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-1, 1));
    double ts = 0, tp = 0;
    kern::set_mode(kern::Mode::Serial);
    ts = time_best_of(5, [&] {
      kern::matmul(a.data(), b.data(), c.data(), m, k, n, false, false);
    });
    kern::set_mode(kern::Mode::Parallel);
    tp = time_best_of(5, [&] {
      kern::matmul(a.data(), b.data(), c.data(), m, k, n, false, false);
    });
    row("matmul 256x256x512", ts, tp);
  }

  {
    const int m = 512, n = 512;
    std::vector<float> x(m * n), y(m * n);
    Rng rng(9);
    for (auto& v : x) v = static_cast<float>(rng.uniform(-4, 4));
    kern::set_mode(kern::Mode::Serial);
    double ts = time_best_of(5, [&] {
      kern::softmax_rows(x.data(), y.data(), m, n);
    });
    kern::set_mode(kern::Mode::Parallel);
    double tp = time_best_of(5, [&] {
      kern::softmax_rows(x.data(), y.data(), m, n);
    });
    row("softmax 512x512", ts, tp);
  }

  {
    const int m = 512, n = 256;
    std::vector<float> x(m * n), y(m * n), g(n, 1.0f), b(n, 0.0f);
    std::vector<float> mean(m), rstd(m);
    Rng rng(11);
    for (auto& v : x) v = static_cast<float>(rng.uniform(-2, 2));
    kern::set_mode(kern::Mode::Serial);
    double ts = time_best_of(5, [&] {
      kern::layer_norm_rows(x.data(), g.data(), b.data(), y.data(),
                            mean.data(), rstd.data(), m, n, 1e-5f);
    });
    kern::set_mode(kern::Mode::Parallel);
    double tp = time_best_of(5, [&] {
      kern::layer_norm_rows(x.data(), g.data(), b.data(), y.data(),
                            mean.data(), rstd.data(), m, n, 1e-5f);
    });
    row("layer_norm 512x256", ts, tp);
  }

  // a full optimization step at the scale of the test-suite toy model
  {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.d_model = 64;
    cfg.d_ff = 128;
    cfg.heads = 4;
    cfg.max_seg_len = 5;
    cfg.vocab_size = 20;
    Rng rng(3);
    MslmParams params = init_params(cfg, rng);
    std::vector<EncodedLine> lines(8);
    for (auto& line : lines) {
      const int T = 16 + rng.uniform_int(8);
      for (int i = 0; i < T; ++i)
        line.ids.push_back(CharVocab::kNumSpecials +
                           rng.uniform_int(cfg.vocab_size -
                                           CharVocab::kNumSpecials));
    }
    std::vector<const EncodedLine*> batch;
    for (auto& line : lines) batch.push_back(&line);
    auto step = [&] {
      Tensor loss = nll_loss(params, cfg, batch);
      grad_of(loss, params.all());
    };
    kern::set_mode(kern::Mode::Serial);
    double ts = time_best_of(3, step);
    kern::set_mode(kern::Mode::Parallel);
    double tp = time_best_of(3, step);
    row("train step (8x~20 chars)", ts, tp);
  }

  return 0;
}
