#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace seglm {

// Reverse-mode autodiff over dense float32 tensors (1-D and 2-D). Ops record
// a tape when gradients are enabled; backward() replays it once in reverse
// topological order. Tensors are cheap shared handles.

struct TensorNode;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, float v);
  static Tensor from(std::vector<int> shape, std::vector<float> data);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int rows() const;  // 2-D only
  int cols() const;  // 2-D only
  size_t numel() const;
  float* data();
  const float* data() const;
  const float* grad() const;  // nullptr until gradients accumulate
  std::vector<float>& grad_vec();
  float item() const;  // single-element tensors

  void set_requires_grad(bool v);
  bool requires_grad() const;
  void zero_grad();

  TensorNode* node() const { return node_.get(); }
  std::shared_ptr<TensorNode> impl() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until needed; zeros on alloc
  bool requires_grad = false;
  bool needs_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  size_t numel() const { return data.size(); }
  void ensure_grad();
};

bool grad_enabled();
// Disables tape recording in scope (inference / evaluation).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

std::string shape_str(const std::vector<int>& s);

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor add(const Tensor& a, const Tensor& b);       // identical shapes
Tensor add_bias(const Tensor& x, const Tensor& b);  // [m,n] + [n]
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor sum_all(const Tensor& x);  // -> [1]
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor logsumexp_rows(const Tensor& x);  // [m,n] -> [m]; [n] -> [1]
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = 1e-5f);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor gather_cols(const Tensor& x, const std::vector<int>& col_ids);  // -> [m]
Tensor slice_rows(const Tensor& x, int r0, int len);
Tensor slice_cols(const Tensor& x, int c0, int len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor dropout(const Tensor& x, float p, uint64_t seed);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid_t(const Tensor& x);
Tensor relu_t(const Tensor& x);

// Total log-probability of all segment paths through an edge table E[T,k]
// (E[i][l-1] = score of the segment covering characters i+1..i+l). Forward
// and gradient run internally in double; invalid cells are never read.
Tensor lattice_log_marginal(const Tensor& edges, int T, int k);

void backward(const Tensor& loss);
// dLoss/dParam for each param; zero tensors for params the loss never saw.
std::vector<Tensor> grad_of(const Tensor& loss, const std::vector<Tensor>& params);

}  // namespace seglm
