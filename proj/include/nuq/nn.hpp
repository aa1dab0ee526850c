#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nuq/autograd.hpp"
#include "nuq/rng.hpp"

namespace nuq {

/// Ordered registry of named trainable tensors; the checkpoint format and the
/// optimizer both key off these names.
struct ParamDict {
  std::vector<std::pair<std::string, Var>> items;
  void add(const std::string& name, const Var& v) { items.emplace_back(name, v); }
  Var* find(const std::string& name);
  const Var* find(const std::string& name) const;
};

/// Named non-trainable state (batch-norm running stats).
struct BufferDict {
  std::vector<std::pair<std::string, Tensor*>> items;
  void add(const std::string& name, Tensor* t) { items.emplace_back(name, t); }
};

Tensor init_normal(std::vector<int> shape, double stddev, Rng& rng);
Tensor init_uniform(std::vector<int> shape, double lo, double hi, Rng& rng);

struct Linear {
  Var W, b;
  int in = 0, out = 0;

  void init(int in_dim, int out_dim, Rng& rng, bool bias = true);
  Var forward(const Var& x) const { return linear(x, W, b); }
  void register_params(ParamDict& pd, const std::string& prefix) const;
};

/// Bias is omitted when the layer feeds a batch norm (the normalization
/// cancels it, leaving a parameter with an identically zero gradient).
struct Conv2d {
  Var W, b;
  int in_ch = 0, out_ch = 0, kernel = 4, stride = 2, pad = 1;

  void init(int in_c, int out_c, Rng& rng, bool bias = true, int k = 4, int s = 2, int p = 1);
  Var forward(const Var& x) const { return conv2d(x, W, b, stride, pad); }
  void register_params(ParamDict& pd, const std::string& prefix) const;
};

struct ConvTranspose2d {
  Var W, b;
  int in_ch = 0, out_ch = 0, kernel = 4, stride = 2, pad = 1;

  void init(int in_c, int out_c, Rng& rng, bool bias = true, int k = 4, int s = 2, int p = 1);
  Var forward(const Var& x) const { return conv_transpose2d(x, W, b, stride, pad); }
  void register_params(ParamDict& pd, const std::string& prefix) const;
};

struct BatchNorm2d {
  Var gamma, beta;
  Tensor running_mean, running_var;
  int channels = 0;
  double momentum = 0.1, eps = 1e-5;

  void init(int c);
  Var forward(const Var& x, bool training) {
    return batchnorm2d(x, gamma, beta, &running_mean, &running_var, training, momentum, eps);
  }
  void register_params(ParamDict& pd, const std::string& prefix) const;
  void register_buffers(BufferDict& bd, const std::string& prefix);
};

struct LstmState {
  Var h, c;
  static LstmState zeros(int batch, int hidden);
};

/// Single LSTM cell (input, forget, cell, output gates), built from the
/// primitive ops so every piece stays under gradient test coverage.
struct LstmCell {
  Linear ih;  // [4H, in]
  Linear hh;  // [4H, H], no bias
  int hidden = 0;

  void init(int in_dim, int hidden_dim, Rng& rng);
  LstmState forward(const Var& x, const LstmState& state) const;
  void register_params(ParamDict& pd, const std::string& prefix) const;
};

/// Adam with standard defaults; optional global gradient-norm clipping
/// (clip <= 0 disables). Operates on the leaves registered in a ParamDict.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(double clip_norm = 0.0);
  void zero_grad();
  int64_t step_count() const { return t_; }

  // Checkpoint plumbing.
  const std::vector<Tensor>& m() const { return m_; }
  const std::vector<Tensor>& v() const { return v_; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, int64_t t);
  size_t size() const { return params_.size(); }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
};

/// FNV-1a over the raw bytes of every tensor; used by the alternating-update
/// isolation checks.
uint64_t hash_params(const std::vector<Var>& params);

}  // namespace nuq
