#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "nuq/tensor.hpp"

namespace nuq {

/// Reverse-mode autodiff over Tensor. Ops build an implicit tape (each node
/// keeps shared ownership of its parents); backward() runs a topological walk
/// and accumulates gradients. Everything is double precision.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;  // reads this->grad, accumulates into parents

  Tensor& ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  static Var leaf(Tensor value, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value_mut() { return node_->value; }
  Tensor& grad() { return node_->ensure_grad(); }
  const Tensor& grad() const { return node_->ensure_grad(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() {
    if (node_) node_->ensure_grad().fill(0.0);
  }
  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

/// Constant (no gradient) wrappers.
Var constant(Tensor value);
Var constant_scalar(double v);

/// RAII guard disabling tape construction (generation / evaluation paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

/// Runs reverse-mode accumulation from a scalar root. When `release` is true
/// (default) the tape is dismantled afterwards so activation memory frees
/// immediately; pass false to keep the graph (e.g. to inspect twice).
void backward(const Var& root, bool release = true);

// ---- elementwise (shapes must match exactly) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var neg(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var reciprocal(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var tanh_v(const Var& a);
Var softplus(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var clamp(const Var& a, double lo, double hi);
/// log Phi(alpha / beta), elementwise. Stable for alpha >= 0.
Var log_norm_cdf_ratio(const Var& alpha, const Var& beta);
/// Identity value, blocked gradient.
Var detach(const Var& a);

// ---- reductions ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
/// [N, ...] -> [N], summing everything but dim 0.
Var sum_per_sample(const Var& a);

// ---- shape ----
Var reshape(const Var& a, std::vector<int> shape);
/// Concatenate along dim 1; dims 0 and >=2 must agree.
Var concat_dim1(const Var& a, const Var& b);
/// Slice [c0, c1) along dim 1.
Var slice_dim1(const Var& a, int c0, int c1);

// ---- dense / conv ----
/// x [N,in] * W[out,in]^T + b[out] -> [N,out]; pass undefined Var for no bias.
Var linear(const Var& x, const Var& W, const Var& b);
/// x [N,C,H,W], W [OC,C,KH,KW], b [OC] (optional) -> [N,OC,OH,OW].
Var conv2d(const Var& x, const Var& W, const Var& b, int stride, int pad);
/// x [N,IC,H,W], W [IC,OC,KH,KW], b [OC] (optional) -> [N,OC,(H-1)s-2p+K,...].
Var conv_transpose2d(const Var& x, const Var& W, const Var& b, int stride, int pad);
/// Standard batch normalization over N,H,W per channel. In training mode the
/// running stats are updated in place (no gradient through them).
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, Tensor* running_mean,
                Tensor* running_var, bool training, double momentum = 0.1, double eps = 1e-5);

}  // namespace nuq
