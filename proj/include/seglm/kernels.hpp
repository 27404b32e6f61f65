#pragma once

#include <cstddef>
#include <cstdint>

// Low-level float kernels. Every routine computes each output element with a
// fixed per-element arithmetic order, and parallel mode only distributes rows
// (or elements) across threads, so results are bit-identical to serial mode
// and independent of thread count. Reductions to a single scalar stay serial.

namespace seglm::kern {

enum class Mode { Serial, Parallel };

void set_mode(Mode m);
Mode mode();

// C[m,n] = A[m,k] @ B[k,n], or A[m,k] @ B[n,k]^T when transpose_b.
// accumulate adds into C instead of overwriting.
void matmul(const float* A, const float* B, float* C, int m, int k, int n,
            bool transpose_b, bool accumulate);

// C[k,n] (+)= A[m,k]^T @ B[m,n]. Used for weight gradients.
void matmul_tn(const float* A, const float* B, float* C, int m, int k, int n,
               bool accumulate);

// Row-wise numerically safe softmax family (double accumulators).
void softmax_rows(const float* x, float* y, int m, int n);
void log_softmax_rows(const float* x, float* y, int m, int n);
void logsumexp_rows(const float* x, float* y, int m, int n);  // y[m]

// y = (x - mean) * rstd * gain + bias per row; saves mean/rstd for backward.
void layer_norm_rows(const float* x, const float* gain, const float* bias,
                     float* y, float* mean, float* rstd, int m, int n,
                     float eps);
void layer_norm_backward(const float* x, const float* gain, const float* mean,
                         const float* rstd, const float* dy, float* dx,
                         float* dgain, float* dbias, int m, int n);

// Elementwise helpers.
void vtanh(const float* x, float* y, size_t n);
void vsigmoid(const float* x, float* y, size_t n);
void vrelu(const float* x, float* y, size_t n);
void vadd(const float* a, const float* b, float* y, size_t n);
void vmul(const float* a, const float* b, float* y, size_t n);
void vscale(const float* x, float c, float* y, size_t n);
void axpy(float a, const float* x, float* y, size_t n);  // y += a*x

// y[i,:] = x[i,:] + b  (row-broadcast add)
void add_bias_rows(const float* x, const float* b, float* y, int m, int n);

double sum_all(const float* x, size_t n);  // serial, double accumulator

}  // namespace seglm::kern
