#include "seglm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "seglm/common.hpp"
#include "seglm/kernels.hpp"

namespace seglm {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(std::vector<int> shape,
                                      std::vector<float> data) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

size_t shape_numel(const std::vector<int>& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

// Registers parents and the backward closure if any input carries gradient.
void attach(const std::shared_ptr<TensorNode>& out,
            std::vector<std::shared_ptr<TensorNode>> parents,
            std::function<void(TensorNode&)> fn) {
  if (!g_grad_enabled) return;
  bool needs = false;
  for (const auto& p : parents)
    if (p->needs_grad || p->requires_grad) needs = true;
  if (!needs) return;
  out->needs_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
}

[[noreturn]] void shape_fail(const std::string& op, const std::vector<int>& a,
                             const std::vector<int>& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

}  // namespace

void TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

Tensor Tensor::zeros(std::vector<int> shape) {
  auto n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<float>(n, 0.0f)));
}

Tensor Tensor::full(std::vector<int> shape, float v) {
  auto n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<float>(n, v)));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> data) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("Tensor::from: " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  return Tensor(make_node(std::move(shape), std::move(data)));
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }

int Tensor::rows() const {
  if (node_->shape.size() != 2) throw ShapeError("rows(): tensor is not 2-D");
  return node_->shape[0];
}

int Tensor::cols() const {
  if (node_->shape.size() != 2) throw ShapeError("cols(): tensor is not 2-D");
  return node_->shape[1];
}

size_t Tensor::numel() const { return node_->numel(); }
float* Tensor::data() { return node_->data.data(); }
const float* Tensor::data() const { return node_->data.data(); }
const float* Tensor::grad() const {
  return node_->grad.empty() ? nullptr : node_->grad.data();
}
std::vector<float>& Tensor::grad_vec() {
  node_->ensure_grad();
  return node_->grad;
}

float Tensor::item() const {
  if (node_->numel() != 1)
    throw ShapeError("item(): tensor has " + std::to_string(node_->numel()) +
                     " elements");
  return node_->data[0];
}

void Tensor::set_requires_grad(bool v) {
  node_->requires_grad = v;
  node_->needs_grad = v;
}
bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0f); }

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    shape_fail("matmul", a.shape(), b.shape());
  const int m = a.shape()[0], k = a.shape()[1];
  const int bk = transpose_b ? b.shape()[1] : b.shape()[0];
  const int n = transpose_b ? b.shape()[0] : b.shape()[1];
  if (bk != k) shape_fail("matmul", a.shape(), b.shape());
  Tensor out = Tensor::zeros({m, n});
  kern::matmul(a.data(), b.data(), out.data(), m, k, n, transpose_b, false);
  auto pa = a.impl(), pb = b.impl();
  attach(out.impl(), {pa, pb}, [pa, pb, m, k, n, transpose_b](TensorNode& self) {
    if (pa->needs_grad || pa->requires_grad) {
      pa->ensure_grad();
      // dA = dC @ B^T (or dC @ B when b was transposed)
      kern::matmul(self.grad.data(), pb->data.data(), pa->grad.data(), m, n, k,
                   !transpose_b, true);
    }
    if (pb->needs_grad || pb->requires_grad) {
      pb->ensure_grad();
      if (!transpose_b)
        kern::matmul_tn(pa->data.data(), self.grad.data(), pb->grad.data(), m,
                        k, n, true);
      else
        kern::matmul_tn(self.grad.data(), pa->data.data(), pb->grad.data(), m,
                        n, k, true);
    }
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  Tensor out = Tensor::zeros(a.shape());
  kern::vadd(a.data(), b.data(), out.data(), a.numel());
  auto pa = a.impl(), pb = b.impl();
  attach(out.impl(), {pa, pb}, [pa, pb](TensorNode& self) {
    if (pa->needs_grad || pa->requires_grad) {
      pa->ensure_grad();
      kern::axpy(1.0f, self.grad.data(), pa->grad.data(), self.numel());
    }
    if (pb->needs_grad || pb->requires_grad) {
      pb->ensure_grad();
      kern::axpy(1.0f, self.grad.data(), pb->grad.data(), self.numel());
    }
  });
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 ||
      b.shape()[0] != x.shape()[1])
    shape_fail("add_bias", x.shape(), b.shape());
  const int m = x.shape()[0], n = x.shape()[1];
  Tensor out = Tensor::zeros(x.shape());
  kern::add_bias_rows(x.data(), b.data(), out.data(), m, n);
  auto px = x.impl(), pb = b.impl();
  attach(out.impl(), {px, pb}, [px, pb, m, n](TensorNode& self) {
    if (px->needs_grad || px->requires_grad) {
      px->ensure_grad();
      kern::axpy(1.0f, self.grad.data(), px->grad.data(), self.numel());
    }
    if (pb->needs_grad || pb->requires_grad) {
      pb->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          pb->grad[j] += self.grad[static_cast<size_t>(i) * n + j];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  Tensor out = Tensor::zeros(a.shape());
  kern::vmul(a.data(), b.data(), out.data(), a.numel());
  auto pa = a.impl(), pb = b.impl();
  attach(out.impl(), {pa, pb}, [pa, pb](TensorNode& self) {
    const size_t n = self.numel();
    if (pa->needs_grad || pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < n; ++i)
        pa->grad[i] += self.grad[i] * pb->data[i];
    }
    if (pb->needs_grad || pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < n; ++i)
        pb->grad[i] += self.grad[i] * pa->data[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, float c) {
  Tensor out = Tensor::zeros(a.shape());
  kern::vscale(a.data(), c, out.data(), a.numel());
  auto pa = a.impl();
  attach(out.impl(), {pa}, [pa, c](TensorNode& self) {
    pa->ensure_grad();
    kern::axpy(c, self.grad.data(), pa->grad.data(), self.numel());
  });
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::from({1}, {static_cast<float>(kern::sum_all(
                                     x.data(), x.numel()))});
  auto px = x.impl();
  attach(out.impl(), {px}, [px](TensorNode& self) {
    px->ensure_grad();
    const float g = self.grad[0];
    for (auto& v : px->grad) v += g;
  });
  return out;
}

namespace {
// Treat 1-D [n] as a single row; returns {m, n}.
std::pair<int, int> row_view(const Tensor& x) {
  if (x.shape().size() == 1) return {1, x.shape()[0]};
  if (x.shape().size() == 2) return {x.shape()[0], x.shape()[1]};
  throw ShapeError("expected 1-D or 2-D tensor, got " + shape_str(x.shape()));
}
}  // namespace

Tensor softmax_rows(const Tensor& x) {
  auto [m, n] = row_view(x);
  Tensor out = Tensor::zeros(x.shape());
  kern::softmax_rows(x.data(), out.data(), m, n);
  auto px = x.impl();
  attach(out.impl(), {px}, [px, m = m, n = n](TensorNode& self) {
    px->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const float* y = self.data.data() + static_cast<size_t>(i) * n;
      const float* dy = self.grad.data() + static_cast<size_t>(i) * n;
      float* dx = px->grad.data() + static_cast<size_t>(i) * n;
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += static_cast<double>(dy[j]) * y[j];
      for (int j = 0; j < n; ++j)
        dx[j] += static_cast<float>((dy[j] - s) * y[j]);
    }
  });
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  auto [m, n] = row_view(x);
  Tensor out = Tensor::zeros(x.shape());
  kern::log_softmax_rows(x.data(), out.data(), m, n);
  auto px = x.impl();
  attach(out.impl(), {px}, [px, m = m, n = n](TensorNode& self) {
    px->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const float* y = self.data.data() + static_cast<size_t>(i) * n;
      const float* dy = self.grad.data() + static_cast<size_t>(i) * n;
      float* dx = px->grad.data() + static_cast<size_t>(i) * n;
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += dy[j];
      for (int j = 0; j < n; ++j)
        dx[j] += static_cast<float>(dy[j] - std::exp(static_cast<double>(y[j])) * s);
    }
  });
  return out;
}

Tensor logsumexp_rows(const Tensor& x) {
  auto [m, n] = row_view(x);
  Tensor out = Tensor::zeros({m});
  kern::logsumexp_rows(x.data(), out.data(), m, n);
  auto px = x.impl();
  attach(out.impl(), {px}, [px, m = m, n = n](TensorNode& self) {
    px->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const float* xd = px->data.data() + static_cast<size_t>(i) * n;
      float* dx = px->grad.data() + static_cast<size_t>(i) * n;
      const double lse = self.data[i];
      const double g = self.grad[i];
      for (int j = 0; j < n; ++j)
        dx[j] += static_cast<float>(g * std::exp(static_cast<double>(xd[j]) - lse));
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps) {
  auto [m, n] = row_view(x);
  if (gain.shape() != std::vector<int>{n} || bias.shape() != std::vector<int>{n})
    shape_fail("layer_norm", x.shape(), gain.shape());
  Tensor out = Tensor::zeros(x.shape());
  auto mean = std::make_shared<std::vector<float>>(m);
  auto rstd = std::make_shared<std::vector<float>>(m);
  kern::layer_norm_rows(x.data(), gain.data(), bias.data(), out.data(),
                        mean->data(), rstd->data(), m, n, eps);
  auto px = x.impl(), pg = gain.impl(), pb = bias.impl();
  attach(out.impl(), {px, pg, pb},
         [px, pg, pb, mean, rstd, m = m, n = n](TensorNode& self) {
           px->ensure_grad();
           pg->ensure_grad();
           pb->ensure_grad();
           kern::layer_norm_backward(px->data.data(), pg->data.data(),
                                     mean->data(), rstd->data(),
                                     self.grad.data(), px->grad.data(),
                                     pg->grad.data(), pb->grad.data(), m, n);
         });
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2)
    throw ShapeError("embedding: table must be 2-D, got " +
                     shape_str(table.shape()));
  const int V = table.shape()[0], d = table.shape()[1];
  const int len = static_cast<int>(ids.size());
  for (int id : ids)
    if (id < 0 || id >= V)
      throw ShapeError("embedding: id " + std::to_string(id) +
                       " outside table of " + std::to_string(V) + " rows");
  Tensor out = Tensor::zeros({len, d});
  for (int i = 0; i < len; ++i)
    std::copy_n(table.data() + static_cast<size_t>(ids[i]) * d, d,
                out.data() + static_cast<size_t>(i) * d);
  auto pt = table.impl();
  attach(out.impl(), {pt}, [pt, ids, d](TensorNode& self) {
    pt->ensure_grad();
    // scatter-add stays serial so accumulation order is fixed
    for (size_t i = 0; i < ids.size(); ++i) {
      const float* g = self.grad.data() + i * d;
      float* dst = pt->grad.data() + static_cast<size_t>(ids[i]) * d;
      for (int j = 0; j < d; ++j) dst[j] += g[j];
    }
  });
  return out;
}

Tensor gather_cols(const Tensor& x, const std::vector<int>& col_ids) {
  auto [m, n] = row_view(x);
  if (static_cast<int>(col_ids.size()) != m)
    throw ShapeError("gather_cols: " + std::to_string(col_ids.size()) +
                     " indices for " + std::to_string(m) + " rows");
  for (int c : col_ids)
    if (c < 0 || c >= n)
      throw ShapeError("gather_cols: column " + std::to_string(c) +
                       " outside width " + std::to_string(n));
  Tensor out = Tensor::zeros({m});
  for (int i = 0; i < m; ++i)
    out.data()[i] = x.data()[static_cast<size_t>(i) * n + col_ids[i]];
  auto px = x.impl();
  attach(out.impl(), {px}, [px, col_ids, n = n](TensorNode& self) {
    px->ensure_grad();
    for (size_t i = 0; i < col_ids.size(); ++i)
      px->grad[i * n + col_ids[i]] += self.grad[i];
  });
  return out;
}

Tensor slice_rows(const Tensor& x, int r0, int len) {
  if (x.shape().size() == 1) {
    const int n = x.shape()[0];
    if (r0 < 0 || len < 0 || r0 + len > n)
      throw ShapeError("slice_rows: [" + std::to_string(r0) + "," +
                       std::to_string(r0 + len) + ") outside " + shape_str(x.shape()));
    Tensor out = Tensor::zeros({len});
    std::copy_n(x.data() + r0, len, out.data());
    auto px = x.impl();
    attach(out.impl(), {px}, [px, r0](TensorNode& self) {
      px->ensure_grad();
      for (size_t i = 0; i < self.numel(); ++i)
        px->grad[static_cast<size_t>(r0) + i] += self.grad[i];
    });
    return out;
  }
  const int m = x.rows(), n = x.cols();
  if (r0 < 0 || len < 0 || r0 + len > m)
    throw ShapeError("slice_rows: [" + std::to_string(r0) + "," +
                     std::to_string(r0 + len) + ") outside " + shape_str(x.shape()));
  Tensor out = Tensor::zeros({len, n});
  std::copy_n(x.data() + static_cast<size_t>(r0) * n,
              static_cast<size_t>(len) * n, out.data());
  auto px = x.impl();
  attach(out.impl(), {px}, [px, r0, n](TensorNode& self) {
    px->ensure_grad();
    float* dst = px->grad.data() + static_cast<size_t>(r0) * n;
    for (size_t i = 0; i < self.numel(); ++i) dst[i] += self.grad[i];
  });
  return out;
}

Tensor slice_cols(const Tensor& x, int c0, int len) {
  const int m = x.rows(), n = x.cols();
  if (c0 < 0 || len < 0 || c0 + len > n)
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," +
                     std::to_string(c0 + len) + ") outside " + shape_str(x.shape()));
  Tensor out = Tensor::zeros({m, len});
  for (int i = 0; i < m; ++i)
    std::copy_n(x.data() + static_cast<size_t>(i) * n + c0, len,
                out.data() + static_cast<size_t>(i) * len);
  auto px = x.impl();
  attach(out.impl(), {px}, [px, c0, m, n, len](TensorNode& self) {
    px->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const float* g = self.grad.data() + static_cast<size_t>(i) * len;
      float* dst = px->grad.data() + static_cast<size_t>(i) * n + c0;
      for (int j = 0; j < len; ++j) dst[j] += g[j];
    }
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const bool one_d = parts[0].shape().size() == 1;
  int n = one_d ? 0 : parts[0].cols();
  int total = 0;
  for (const auto& p : parts) {
    if ((p.shape().size() == 1) != one_d ||
        (!one_d && p.cols() != n))
      shape_fail("concat_rows", parts[0].shape(), p.shape());
    total += one_d ? p.shape()[0] : p.rows();
  }
  Tensor out = one_d ? Tensor::zeros({total}) : Tensor::zeros({total, n});
  size_t off = 0;
  std::vector<std::shared_ptr<TensorNode>> impls;
  for (const auto& p : parts) {
    std::copy_n(p.data(), p.numel(), out.data() + off);
    off += p.numel();
    impls.push_back(p.impl());
  }
  attach(out.impl(), impls, [impls](TensorNode& self) {
    size_t off = 0;
    for (const auto& p : impls) {
      if (p->needs_grad || p->requires_grad) {
        p->ensure_grad();
        for (size_t i = 0; i < p->numel(); ++i)
          p->grad[i] += self.grad[off + i];
      }
      off += p->numel();
    }
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  // 1-D inputs become single columns.
  int m = parts[0].shape().size() == 1 ? parts[0].shape()[0] : parts[0].rows();
  int total = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    const int pm = p.shape().size() == 1 ? p.shape()[0] : p.rows();
    const int pn = p.shape().size() == 1 ? 1 : p.cols();
    if (pm != m) shape_fail("concat_cols", parts[0].shape(), p.shape());
    widths.push_back(pn);
    total += pn;
  }
  Tensor out = Tensor::zeros({m, total});
  std::vector<std::shared_ptr<TensorNode>> impls;
  int c0 = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const int w = widths[pi];
    for (int i = 0; i < m; ++i)
      std::copy_n(parts[pi].data() + static_cast<size_t>(i) * w, w,
                  out.data() + static_cast<size_t>(i) * total + c0);
    c0 += w;
    impls.push_back(parts[pi].impl());
  }
  attach(out.impl(), impls, [impls, widths, m, total](TensorNode& self) {
    int c0 = 0;
    for (size_t pi = 0; pi < impls.size(); ++pi) {
      const int w = widths[pi];
      auto& p = impls[pi];
      if (p->needs_grad || p->requires_grad) {
        p->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const float* g =
              self.grad.data() + static_cast<size_t>(i) * total + c0;
          float* dst = p->grad.data() + static_cast<size_t>(i) * w;
          for (int j = 0; j < w; ++j) dst[j] += g[j];
        }
      }
      c0 += w;
    }
  });
  return out;
}

Tensor dropout(const Tensor& x, float p, uint64_t seed) {
  if (p < 0.0f || p >= 1.0f)
    throw ShapeError("dropout: rate " + std::to_string(p) + " outside [0,1)");
  if (p == 0.0f) return x;
  const size_t n = x.numel();
  auto mask = std::make_shared<std::vector<float>>(n);
  const float keep_scale = 1.0f / (1.0f - p);
  for (size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(elem_hash(seed, i) >> 11) * 0x1.0p-53;
    (*mask)[i] = u < p ? 0.0f : keep_scale;
  }
  Tensor out = Tensor::zeros(x.shape());
  kern::vmul(x.data(), mask->data(), out.data(), n);
  auto px = x.impl();
  attach(out.impl(), {px}, [px, mask](TensorNode& self) {
    px->ensure_grad();
    for (size_t i = 0; i < self.numel(); ++i)
      px->grad[i] += self.grad[i] * (*mask)[i];
  });
  return out;
}

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out = Tensor::zeros(x.shape());
  fwd(x.data(), out.data(), x.numel());
  auto px = x.impl();
  attach(out.impl(), {px}, [px, bwd](TensorNode& self) {
    px->ensure_grad();
    bwd(self, *px);
  });
  return out;
}

}  // namespace

Tensor tanh_t(const Tensor& x) {
  return unary_op(x, kern::vtanh, [](TensorNode& self, TensorNode& p) {
    for (size_t i = 0; i < self.numel(); ++i) {
      const float y = self.data[i];
      p.grad[i] += self.grad[i] * (1.0f - y * y);
    }
  });
}

Tensor sigmoid_t(const Tensor& x) {
  return unary_op(x, kern::vsigmoid, [](TensorNode& self, TensorNode& p) {
    for (size_t i = 0; i < self.numel(); ++i) {
      const float y = self.data[i];
      p.grad[i] += self.grad[i] * y * (1.0f - y);
    }
  });
}

Tensor relu_t(const Tensor& x) {
  return unary_op(x, kern::vrelu, [](TensorNode& self, TensorNode& p) {
    for (size_t i = 0; i < self.numel(); ++i)
      if (p.data[i] > 0.0f) p.grad[i] += self.grad[i];
  });
}

Tensor lattice_log_marginal(const Tensor& edges, int T, int k) {
  if (edges.shape() != std::vector<int>{T, k})
    throw ShapeError("lattice_log_marginal: edges " + shape_str(edges.shape()) +
                     " but expected [" + std::to_string(T) + "," +
                     std::to_string(k) + "]");
  const float* E = edges.data();
  auto at = [E, k](int i, int l) {
    return static_cast<double>(E[static_cast<size_t>(i) * k + (l - 1)]);
  };
  auto lse_acc = [](std::vector<double>& terms) {
    double mx = terms[0];
    for (double t : terms) mx = std::max(mx, t);
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
  };
  auto la = std::make_shared<std::vector<double>>(T + 1, 0.0);
  std::vector<double> terms;
  for (int t = 1; t <= T; ++t) {
    terms.clear();
    for (int j = std::max(0, t - k); j <= t - 1; ++j)
      terms.push_back((*la)[j] + at(j, t - j));
    (*la)[t] = lse_acc(terms);
  }
  const double logz = (*la)[T];
  Tensor out = Tensor::from({1}, {static_cast<float>(logz)});
  auto pe = edges.impl();
  attach(out.impl(), {pe}, [pe, la, T, k, logz](TensorNode& self) {
    pe->ensure_grad();
    // suffix scores, then edge posteriors
    std::vector<double> lb(T + 1, 0.0);
    std::vector<double> terms;
    auto at = [&](int i, int l) {
      return static_cast<double>(pe->data[static_cast<size_t>(i) * k + (l - 1)]);
    };
    for (int t = T - 1; t >= 0; --t) {
      terms.clear();
      for (int l = 1; l <= std::min(k, T - t); ++l)
        terms.push_back(at(t, l) + lb[t + l]);
      double mx = terms[0];
      for (double v : terms) mx = std::max(mx, v);
      double s = 0.0;
      for (double v : terms) s += std::exp(v - mx);
      lb[t] = mx + std::log(s);
    }
    const double go = self.grad[0];
    for (int i = 0; i < T; ++i) {
      for (int l = 1; l <= std::min(k, T - i); ++l) {
        const double post = std::exp((*la)[i] + at(i, l) + lb[i + l] - logz);
        pe->grad[static_cast<size_t>(i) * k + (l - 1)] +=
            static_cast<float>(go * post);
      }
    }
  });
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar");
  TensorNode* root = loss.node();
  if (!root->needs_grad && !root->requires_grad) return;

  // iterative post-order DFS over nodes that carry gradient
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx].get();
      ++idx;
      if (p && p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

std::vector<Tensor> grad_of(const Tensor& loss,
                            const std::vector<Tensor>& params) {
  for (const auto& p : params) p.impl()->grad.assign(p.numel(), 0.0f);
  backward(loss);
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    std::vector<float> g(p.numel(), 0.0f);
    if (p.grad()) std::copy_n(p.grad(), p.numel(), g.data());
    out.push_back(Tensor::from(p.shape(), std::move(g)));
  }
  return out;
}

}  // namespace seglm
