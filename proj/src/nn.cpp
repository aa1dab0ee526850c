#include "nuq/nn.hpp"

#include <cmath>
#include <cstring>

#include "nuq/errors.hpp"

namespace nuq {

Var* ParamDict::find(const std::string& name) {
  for (auto& [n, v] : items)
    if (n == name) return &v;
  return nullptr;
}

const Var* ParamDict::find(const std::string& name) const {
  for (auto& [n, v] : items)
    if (n == name) return &v;
  return nullptr;
}

Tensor init_normal(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

Tensor init_uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void Linear::init(int in_dim, int out_dim, Rng& rng, bool bias) {
  in = in_dim;
  out = out_dim;
  double std = 1.0 / std::sqrt(static_cast<double>(in_dim));
  W = Var::leaf(init_normal({out_dim, in_dim}, std, rng), true);
  if (bias) b = Var::leaf(Tensor::zeros({out_dim}), true);
}

void Linear::register_params(ParamDict& pd, const std::string& prefix) const {
  pd.add(prefix + "/weight", W);
  if (b.defined()) pd.add(prefix + "/bias", b);
}

void Conv2d::init(int in_c, int out_c, Rng& rng, bool bias, int k, int s, int p) {
  in_ch = in_c;
  out_ch = out_c;
  kernel = k;
  stride = s;
  pad = p;
  W = Var::leaf(init_normal({out_c, in_c, k, k}, 0.02, rng), true);
  if (bias) b = Var::leaf(Tensor::zeros({out_c}), true);
}

void Conv2d::register_params(ParamDict& pd, const std::string& prefix) const {
  pd.add(prefix + "/weight", W);
  if (b.defined()) pd.add(prefix + "/bias", b);
}

void ConvTranspose2d::init(int in_c, int out_c, Rng& rng, bool bias, int k, int s, int p) {
  in_ch = in_c;
  out_ch = out_c;
  kernel = k;
  stride = s;
  pad = p;
  W = Var::leaf(init_normal({in_c, out_c, k, k}, 0.02, rng), true);
  if (bias) b = Var::leaf(Tensor::zeros({out_c}), true);
}

void ConvTranspose2d::register_params(ParamDict& pd, const std::string& prefix) const {
  pd.add(prefix + "/weight", W);
  if (b.defined()) pd.add(prefix + "/bias", b);
}

void BatchNorm2d::init(int c) {
  channels = c;
  gamma = Var::leaf(Tensor::ones({c}), true);
  beta = Var::leaf(Tensor::zeros({c}), true);
  running_mean = Tensor::zeros({c});
  running_var = Tensor::ones({c});
}

void BatchNorm2d::register_params(ParamDict& pd, const std::string& prefix) const {
  pd.add(prefix + "/gamma", gamma);
  pd.add(prefix + "/beta", beta);
}

void BatchNorm2d::register_buffers(BufferDict& bd, const std::string& prefix) {
  bd.add(prefix + "/running_mean", &running_mean);
  bd.add(prefix + "/running_var", &running_var);
}

LstmState LstmState::zeros(int batch, int hidden) {
  return {constant(Tensor::zeros({batch, hidden})), constant(Tensor::zeros({batch, hidden}))};
}

void LstmCell::init(int in_dim, int hidden_dim, Rng& rng) {
  hidden = hidden_dim;
  double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  ih.in = in_dim;
  ih.out = 4 * hidden_dim;
  ih.W = Var::leaf(init_uniform({4 * hidden_dim, in_dim}, -bound, bound, rng), true);
  Tensor bias = Tensor::zeros({4 * hidden_dim});
  // Forget gate bias starts at 1 so early memories survive.
  for (int i = hidden_dim; i < 2 * hidden_dim; ++i) bias[i] = 1.0;
  ih.b = Var::leaf(std::move(bias), true);
  hh.in = hidden_dim;
  hh.out = 4 * hidden_dim;
  hh.W = Var::leaf(init_uniform({4 * hidden_dim, hidden_dim}, -bound, bound, rng), true);
}

LstmState LstmCell::forward(const Var& x, const LstmState& state) const {
  Var gates = add(ih.forward(x), hh.forward(state.h));
  Var i = sigmoid(slice_dim1(gates, 0, hidden));
  Var f = sigmoid(slice_dim1(gates, hidden, 2 * hidden));
  Var g = tanh_v(slice_dim1(gates, 2 * hidden, 3 * hidden));
  Var o = sigmoid(slice_dim1(gates, 3 * hidden, 4 * hidden));
  Var c_next = add(mul(f, state.c), mul(i, g));
  Var h_next = mul(o, tanh_v(c_next));
  return {h_next, c_next};
}

void LstmCell::register_params(ParamDict& pd, const std::string& prefix) const {
  ih.register_params(pd, prefix + "/ih");
  hh.register_params(pd, prefix + "/hh");
}

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.value().shape()));
    v_.push_back(Tensor::zeros(p.value().shape()));
  }
}

void Adam::step(double clip_norm) {
  double scale = 1.0;
  if (clip_norm > 0.0) {
    double sq = 0.0;
    for (auto& p : params_) {
      const Tensor& g = p.grad();
      for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    }
    double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& w = params_[k].value_mut();
    const Tensor& g = params_[k].grad();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (int64_t i = 0; i < w.numel(); ++i) {
      double gi = g[i] * scale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::restore(std::vector<Tensor> m, std::vector<Tensor> v, int64_t t) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw ShapeError("Adam::restore: state count mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

uint64_t hash_params(const std::vector<Var>& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    const Tensor& t = p.value();
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    size_t n = static_cast<size_t>(t.numel()) * sizeof(double);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace nuq
