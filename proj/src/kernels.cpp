#include "seglm/kernels.hpp"

#include <atomic>
#include <cmath>

namespace seglm::kern {

namespace {
std::atomic<Mode> g_mode{Mode::Serial};
}

void set_mode(Mode m) { g_mode.store(m, std::memory_order_relaxed); }
Mode mode() { return g_mode.load(std::memory_order_relaxed); }

namespace {
inline bool par() { return mode() == Mode::Parallel; }
}

void matmul(const float* A, const float* B, float* C, int m, int k, int n,
            bool transpose_b, bool accumulate) {
  if (!transpose_b) {
#pragma omp parallel for schedule(static) if (par())
    for (int i = 0; i < m; ++i) {
      float* c = C + static_cast<size_t>(i) * n;
      if (!accumulate)
        for (int j = 0; j < n; ++j) c[j] = 0.0f;
      const float* a = A + static_cast<size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const float ap = a[p];
        const float* b = B + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) c[j] += ap * b[j];
      }
    }
  } else {
    // B is [n, k]; C[i][j] = dot(A row i, B row j).
#pragma omp parallel for schedule(static) if (par())
    for (int i = 0; i < m; ++i) {
      const float* a = A + static_cast<size_t>(i) * k;
      float* c = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const float* b = B + static_cast<size_t>(j) * k;
        float acc = 0.0f;
        for (int p = 0; p < k; ++p) acc += a[p] * b[p];
        c[j] = accumulate ? c[j] + acc : acc;
      }
    }
  }
}

void matmul_tn(const float* A, const float* B, float* C, int m, int k, int n,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (par())
  for (int p = 0; p < k; ++p) {
    float* c = C + static_cast<size_t>(p) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) c[j] = 0.0f;
    for (int i = 0; i < m; ++i) {
      const float a = A[static_cast<size_t>(i) * k + p];
      const float* b = B + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

void softmax_rows(const float* x, float* y, int m, int n) {
#pragma omp parallel for schedule(static) if (par())
  for (int i = 0; i < m; ++i) {
    const float* xi = x + static_cast<size_t>(i) * n;
    float* yi = y + static_cast<size_t>(i) * n;
    float mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(static_cast<double>(xi[j]) - mx);
      yi[j] = static_cast<float>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j)
      yi[j] = static_cast<float>(static_cast<double>(yi[j]) * inv);
  }
}

void log_softmax_rows(const float* x, float* y, int m, int n) {
#pragma omp parallel for schedule(static) if (par())
  for (int i = 0; i < m; ++i) {
    const float* xi = x + static_cast<size_t>(i) * n;
    float* yi = y + static_cast<size_t>(i) * n;
    float mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
      sum += std::exp(static_cast<double>(xi[j]) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < n; ++j)
      yi[j] = static_cast<float>(static_cast<double>(xi[j]) - lse);
  }
}

void logsumexp_rows(const float* x, float* y, int m, int n) {
#pragma omp parallel for schedule(static) if (par())
  for (int i = 0; i < m; ++i) {
    const float* xi = x + static_cast<size_t>(i) * n;
    float mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j)
      sum += std::exp(static_cast<double>(xi[j]) - mx);
    y[i] = static_cast<float>(mx + std::log(sum));
  }
}

void layer_norm_rows(const float* x, const float* gain, const float* bias,
                     float* y, float* mean, float* rstd, int m, int n,
                     float eps) {
#pragma omp parallel for schedule(static) if (par())
  for (int i = 0; i < m; ++i) {
    const float* xi = x + static_cast<size_t>(i) * n;
    float* yi = y + static_cast<size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xi[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = xi[j] - mu;
      var += d * d;
    }
    var /= n;
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[i] = static_cast<float>(mu);
    rstd[i] = static_cast<float>(rs);
    for (int j = 0; j < n; ++j)
      yi[j] = static_cast<float>((xi[j] - mu) * rs) * gain[j] + bias[j];
  }
}

void layer_norm_backward(const float* x, const float* gain, const float* mean,
                         const float* rstd, const float* dy, float* dx,
                         float* dgain, float* dbias, int m, int n) {
  // dgain/dbias accumulate across rows: serial to keep order fixed.
  for (int i = 0; i < m; ++i) {
    const float* xi = x + static_cast<size_t>(i) * n;
    const float* dyi = dy + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float xhat = (xi[j] - mean[i]) * rstd[i];
      dgain[j] += dyi[j] * xhat;
      dbias[j] += dyi[j];
    }
  }
#pragma omp parallel for schedule(static) if (par())
  for (int i = 0; i < m; ++i) {
    const float* xi = x + static_cast<size_t>(i) * n;
    const float* dyi = dy + static_cast<size_t>(i) * n;
    float* dxi = dx + static_cast<size_t>(i) * n;
    double sum_g = 0.0, sum_gx = 0.0;
    for (int j = 0; j < n; ++j) {
      const double g = static_cast<double>(dyi[j]) * gain[j];
      const double xhat = (xi[j] - mean[i]) * static_cast<double>(rstd[i]);
      sum_g += g;
      sum_gx += g * xhat;
    }
    const double inv_n = 1.0 / n;
    for (int j = 0; j < n; ++j) {
      const double g = static_cast<double>(dyi[j]) * gain[j];
      const double xhat = (xi[j] - mean[i]) * static_cast<double>(rstd[i]);
      const double d = (g - sum_g * inv_n - xhat * sum_gx * inv_n) * rstd[i];
      dxi[j] += static_cast<float>(d);
    }
  }
}

void vtanh(const float* x, float* y, size_t n) {
#pragma omp parallel for schedule(static) if (par())
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i)
    y[i] = std::tanh(x[i]);
}

void vsigmoid(const float* x, float* y, size_t n) {
#pragma omp parallel for schedule(static) if (par())
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i)
    y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void vrelu(const float* x, float* y, size_t n) {
#pragma omp parallel for schedule(static) if (par())
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i)
    y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void vadd(const float* a, const float* b, float* y, size_t n) {
#pragma omp parallel for schedule(static) if (par())
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i) y[i] = a[i] + b[i];
}

void vmul(const float* a, const float* b, float* y, size_t n) {
#pragma omp parallel for schedule(static) if (par())
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i) y[i] = a[i] * b[i];
}

void vscale(const float* x, float c, float* y, size_t n) {
#pragma omp parallel for schedule(static) if (par())
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i) y[i] = x[i] * c;
}

void axpy(float a, const float* x, float* y, size_t n) {
#pragma omp parallel for schedule(static) if (par())
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(n); ++i) y[i] += a * x[i];
}

void add_bias_rows(const float* x, const float* b, float* y, int m, int n) {
#pragma omp parallel for schedule(static) if (par())
  for (int i = 0; i < m; ++i) {
    const float* xi = x + static_cast<size_t>(i) * n;
    float* yi = y + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) yi[j] = xi[j] + b[j];
  }
}

double sum_all(const float* x, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

}  // namespace seglm::kern
