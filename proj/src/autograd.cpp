#include "nuq/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "nuq/errors.hpp"

namespace nuq {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrMap = Eigen::Map<const Eigen::ArrayXd>;

thread_local bool g_grad_enabled = true;

NodePtr make_node(Tensor value, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p && p->requires_grad) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

void accumulate(Node* p, const Tensor& g) {
  if (!p->requires_grad) return;
  Tensor& dst = p->ensure_grad();
  ArrMap(dst.data(), dst.numel()) += ConstArrMap(g.data(), g.numel());
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
}

double stable_softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) * 0.3989422804014326779399460599344;
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244008443621048); }

// Elementwise unary helper: f(value) and df(value, out_value) give dout/din.
template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF df) {
  Tensor out(a.value().shape());
  const double* av = a.value().data();
  double* ov = out.data();
  int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = f(av[i]);
  auto node = make_node(std::move(out), {a.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node();
    node->backprop = [raw, pa, df]() {
      Tensor& pg = pa->ensure_grad();
      const double* g = raw->grad.data();
      const double* x = pa->value.data();
      const double* y = raw->value.data();
      double* out_g = pg.data();
      int64_t n = raw->value.numel();
      for (int64_t i = 0; i < n; ++i) out_g[i] += g[i] * df(x[i], y[i]);
    };
  }
  return Var(node);
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad.defined()) grad = Tensor::zeros(value.shape());
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(n);
}

Var constant(Tensor value) { return Var::leaf(std::move(value), false); }

Var constant_scalar(double v) { return Var::leaf(Tensor::scalar(v), false); }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& root, bool release) {
  if (!root.defined()) throw ShapeError("backward: undefined root");
  if (root.value().numel() != 1) throw ShapeError("backward: root must be scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS to get a reverse-topological schedule. The
  // schedule holds shared ownership so node teardown can be deferred until
  // every backprop has run (and then happens iteratively, not via recursive
  // shared_ptr chains).
  std::vector<NodePtr> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<NodePtr, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodePtr p = node->parents[idx++];
      if (p->requires_grad && !visited.count(p.get())) {
        visited.insert(p.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop();
  }
  if (release) {
    for (const NodePtr& n : order) {
      n->backprop = nullptr;
      n->parents.clear();
    }
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.value().shape());
  ArrMap(out.data(), out.numel()) = ConstArrMap(a.value().data(), out.numel()) +
                                    ConstArrMap(b.value().data(), out.numel());
  auto node = make_node(std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node(), pb = b.node();
    node->backprop = [raw, pa, pb]() {
      accumulate(pa.get(), raw->grad);
      accumulate(pb.get(), raw->grad);
    };
  }
  return Var(node);
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.value().shape());
  ArrMap(out.data(), out.numel()) = ConstArrMap(a.value().data(), out.numel()) -
                                    ConstArrMap(b.value().data(), out.numel());
  auto node = make_node(std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node(), pb = b.node();
    node->backprop = [raw, pa, pb]() {
      accumulate(pa.get(), raw->grad);
      if (pb->requires_grad) {
        Tensor& pg = pb->ensure_grad();
        ArrMap(pg.data(), pg.numel()) -= ConstArrMap(raw->grad.data(), raw->grad.numel());
      }
    };
  }
  return Var(node);
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.value().shape());
  ArrMap(out.data(), out.numel()) = ConstArrMap(a.value().data(), out.numel()) *
                                    ConstArrMap(b.value().data(), out.numel());
  auto node = make_node(std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node(), pb = b.node();
    node->backprop = [raw, pa, pb]() {
      int64_t n = raw->value.numel();
      if (pa->requires_grad) {
        Tensor& pg = pa->ensure_grad();
        ArrMap(pg.data(), n) +=
            ConstArrMap(raw->grad.data(), n) * ConstArrMap(pb->value.data(), n);
      }
      if (pb->requires_grad) {
        Tensor& pg = pb->ensure_grad();
        ArrMap(pg.data(), n) +=
            ConstArrMap(raw->grad.data(), n) * ConstArrMap(pa->value.data(), n);
      }
    };
  }
  return Var(node);
}

Var add_scalar(const Var& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var exp_v(const Var& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log_v(const Var& a) {
  return unary_op(
      a,
      [](double x) {
        if (x <= 0.0) throw DomainError("log: non-positive argument");
        return std::log(x);
      },
      [](double x, double) { return 1.0 / x; });
}

Var reciprocal(const Var& a) {
  return unary_op(
      a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var square(const Var& a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sigmoid(const Var& a) {
  return unary_op(
      a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh_v(const Var& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(const Var& a) {
  return unary_op(
      a, [](double x) { return stable_softplus(x); },
      [](double x, double) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary_op(
      a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary_op(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var log_norm_cdf_ratio(const Var& alpha, const Var& beta) {
  check_same_shape(alpha, beta, "log_norm_cdf_ratio");
  Tensor out(alpha.value().shape());
  const double* av = alpha.value().data();
  const double* bv = beta.value().data();
  int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (bv[i] <= 0.0) throw DomainError("log_norm_cdf_ratio: beta must be positive");
    out[i] = std::log(norm_cdf(av[i] / bv[i]));
  }
  auto node = make_node(std::move(out), {alpha.node(), beta.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = alpha.node(), pb = beta.node();
    node->backprop = [raw, pa, pb]() {
      int64_t n = raw->value.numel();
      const double* g = raw->grad.data();
      const double* av = pa->value.data();
      const double* bv = pb->value.data();
      for (int64_t i = 0; i < n; ++i) {
        double r = av[i] / bv[i];
        double ratio = norm_pdf(r) / norm_cdf(r);
        if (pa->requires_grad) pa->ensure_grad()[i] += g[i] * ratio / bv[i];
        if (pb->requires_grad) pb->ensure_grad()[i] -= g[i] * ratio * r / bv[i];
      }
    };
  }
  return Var(node);
}

Var detach(const Var& a) { return constant(a.value()); }

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum_all(const Var& a) {
  Tensor out = Tensor::scalar(a.value().sum());
  auto node = make_node(std::move(out), {a.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node();
    node->backprop = [raw, pa]() {
      Tensor& pg = pa->ensure_grad();
      ArrMap(pg.data(), pg.numel()) += raw->grad[0];
    };
  }
  return Var(node);
}

Var mean_all(const Var& a) {
  double inv = 1.0 / static_cast<double>(a.value().numel());
  Tensor out = Tensor::scalar(a.value().sum() * inv);
  auto node = make_node(std::move(out), {a.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node();
    node->backprop = [raw, pa, inv]() {
      Tensor& pg = pa->ensure_grad();
      ArrMap(pg.data(), pg.numel()) += raw->grad[0] * inv;
    };
  }
  return Var(node);
}

Var sum_per_sample(const Var& a) {
  const Tensor& v = a.value();
  if (v.ndim() < 1) throw ShapeError("sum_per_sample: needs >= 1 dim");
  int n = v.dim(0);
  int64_t inner = v.numel() / n;
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    const double* p = v.data() + static_cast<int64_t>(i) * inner;
    double s = 0.0;
    for (int64_t j = 0; j < inner; ++j) s += p[j];
    out[i] = s;
  }
  auto node = make_node(std::move(out), {a.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node();
    node->backprop = [raw, pa, n, inner]() {
      Tensor& pg = pa->ensure_grad();
      for (int i = 0; i < n; ++i) {
        double g = raw->grad[i];
        double* p = pg.data() + static_cast<int64_t>(i) * inner;
        for (int64_t j = 0; j < inner; ++j) p[j] += g;
      }
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a.value().reshaped(shape);
  auto node = make_node(std::move(out), {a.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node();
    node->backprop = [raw, pa]() {
      Tensor& pg = pa->ensure_grad();
      ArrMap(pg.data(), pg.numel()) += ConstArrMap(raw->grad.data(), raw->grad.numel());
    };
  }
  return Var(node);
}

namespace {
// Collapse [N, C, rest...] view for dim-1 concat/slice.
struct Dim1View {
  int n, c;
  int64_t inner;
};
Dim1View dim1_view(const Tensor& t, const char* op) {
  if (t.ndim() < 2) throw ShapeError(std::string(op) + ": needs >= 2 dims");
  int64_t inner = 1;
  for (int i = 2; i < t.ndim(); ++i) inner *= t.dim(i);
  return {t.dim(0), t.dim(1), inner};
}
}  // namespace

Var concat_dim1(const Var& a, const Var& b) {
  Dim1View va = dim1_view(a.value(), "concat_dim1");
  Dim1View vb = dim1_view(b.value(), "concat_dim1");
  if (va.n != vb.n || va.inner != vb.inner)
    throw ShapeError("concat_dim1: incompatible shapes " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
  std::vector<int> shape = a.value().shape();
  shape[1] = va.c + vb.c;
  Tensor out(shape);
  int64_t stride_a = va.c * va.inner, stride_b = vb.c * vb.inner;
  for (int i = 0; i < va.n; ++i) {
    std::copy_n(a.value().data() + i * stride_a, stride_a,
                out.data() + i * (stride_a + stride_b));
    std::copy_n(b.value().data() + i * stride_b, stride_b,
                out.data() + i * (stride_a + stride_b) + stride_a);
  }
  auto node = make_node(std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node(), pb = b.node();
    node->backprop = [raw, pa, pb, va, stride_a, stride_b]() {
      for (int i = 0; i < va.n; ++i) {
        const double* g = raw->grad.data() + i * (stride_a + stride_b);
        if (pa->requires_grad) {
          double* pg = pa->ensure_grad().data() + i * stride_a;
          for (int64_t j = 0; j < stride_a; ++j) pg[j] += g[j];
        }
        if (pb->requires_grad) {
          double* pg = pb->ensure_grad().data() + i * stride_b;
          for (int64_t j = 0; j < stride_b; ++j) pg[j] += g[stride_a + j];
        }
      }
    };
  }
  return Var(node);
}

Var slice_dim1(const Var& a, int c0, int c1) {
  Dim1View v = dim1_view(a.value(), "slice_dim1");
  if (c0 < 0 || c1 > v.c || c0 >= c1) throw ShapeError("slice_dim1: bad range");
  std::vector<int> shape = a.value().shape();
  shape[1] = c1 - c0;
  Tensor out(shape);
  int64_t in_stride = v.c * v.inner, out_stride = (c1 - c0) * v.inner;
  for (int i = 0; i < v.n; ++i) {
    std::copy_n(a.value().data() + i * in_stride + c0 * v.inner, out_stride,
                out.data() + i * out_stride);
  }
  auto node = make_node(std::move(out), {a.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr pa = a.node();
    node->backprop = [raw, pa, v, c0, in_stride, out_stride]() {
      Tensor& pg = pa->ensure_grad();
      for (int i = 0; i < v.n; ++i) {
        const double* g = raw->grad.data() + i * out_stride;
        double* p = pg.data() + i * in_stride + c0 * v.inner;
        for (int64_t j = 0; j < out_stride; ++j) p[j] += g[j];
      }
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

Var linear(const Var& x, const Var& W, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = W.value();
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1))
    throw ShapeError("linear: x " + xv.shape_str() + " vs W " + wv.shape_str());
  int n = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  if (b.defined() && (b.value().ndim() != 1 || b.value().dim(0) != out_dim))
    throw ShapeError("linear: bias shape " + b.value().shape_str());

  Tensor out({n, out_dim});
  {
    ConstMatMap xm(xv.data(), n, in);
    ConstMatMap wm(wv.data(), out_dim, in);
    MatMap om(out.data(), n, out_dim);
    om.noalias() = xm * wm.transpose();
    if (b.defined()) {
      ConstArrMap bm(b.value().data(), out_dim);
      for (int i = 0; i < n; ++i) ArrMap(out.data() + i * out_dim, out_dim) += bm;
    }
  }
  std::vector<NodePtr> parents{x.node(), W.node()};
  if (b.defined()) parents.push_back(b.node());
  auto node = make_node(std::move(out), std::move(parents));
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr px = x.node(), pw = W.node();
    NodePtr pb = b.defined() ? b.node() : nullptr;
    node->backprop = [raw, px, pw, pb, n, in, out_dim]() {
      ConstMatMap gy(raw->grad.data(), n, out_dim);
      if (px->requires_grad) {
        MatMap gx(px->ensure_grad().data(), n, in);
        ConstMatMap wm(pw->value.data(), out_dim, in);
        gx.noalias() += gy * wm;
      }
      if (pw->requires_grad) {
        MatMap gw(pw->ensure_grad().data(), out_dim, in);
        ConstMatMap xm(px->value.data(), n, in);
        gw.noalias() += gy.transpose() * xm;
      }
      if (pb && pb->requires_grad) {
        ArrMap gb(pb->ensure_grad().data(), out_dim);
        for (int i = 0; i < n; ++i) gb += ConstArrMap(raw->grad.data() + i * out_dim, out_dim);
      }
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {

// im2col: x [C,H,W] -> cols [C*K*K, OH*OW] (row-major), zero padding.
void im2col(const double* x, int C, int H, int W, int K, int stride, int pad, int OH, int OW,
            double* cols) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < K; ++ki) {
      for (int kj = 0; kj < K; ++kj) {
        double* row = cols + ((static_cast<int64_t>(c) * K + ki) * K + kj) *
                                 (static_cast<int64_t>(OH) * OW);
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= H) {
            std::fill_n(row + static_cast<int64_t>(oy) * OW, OW, 0.0);
            continue;
          }
          const double* xr = x + (static_cast<int64_t>(c) * H + iy) * W;
          double* rr = row + static_cast<int64_t>(oy) * OW;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride + kj - pad;
            rr[ox] = (ix >= 0 && ix < W) ? xr[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add cols back into x.
void col2im(const double* cols, int C, int H, int W, int K, int stride, int pad, int OH, int OW,
            double* x) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < K; ++ki) {
      for (int kj = 0; kj < K; ++kj) {
        const double* row = cols + ((static_cast<int64_t>(c) * K + ki) * K + kj) *
                                       (static_cast<int64_t>(OH) * OW);
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= H) continue;
          double* xr = x + (static_cast<int64_t>(c) * H + iy) * W;
          const double* rr = row + static_cast<int64_t>(oy) * OW;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride + kj - pad;
            if (ix >= 0 && ix < W) xr[ix] += rr[ox];
          }
        }
      }
    }
  }
}

int conv_out_dim(int in, int K, int stride, int pad) {
  return (in + 2 * pad - K) / stride + 1;
}

}  // namespace

Var conv2d(const Var& x, const Var& W, const Var& b, int stride, int pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = W.value();
  if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(1))
    throw ShapeError("conv2d: x " + xv.shape_str() + " vs W " + wv.shape_str());
  int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), Wd = xv.dim(3);
  int OC = wv.dim(0), K = wv.dim(2);
  if (wv.dim(3) != K) throw ShapeError("conv2d: non-square kernel");
  int OH = conv_out_dim(H, K, stride, pad), OW = conv_out_dim(Wd, K, stride, pad);
  if (OH <= 0 || OW <= 0) throw ShapeError("conv2d: output would be empty");

  int ckk = C * K * K;
  Tensor out({N, OC, OH, OW});
  {
    std::vector<double> cols(static_cast<size_t>(ckk) * OH * OW);
    ConstMatMap wm(wv.data(), OC, ckk);
    for (int n = 0; n < N; ++n) {
      im2col(xv.data() + static_cast<int64_t>(n) * C * H * Wd, C, H, Wd, K, stride, pad, OH, OW,
             cols.data());
      ConstMatMap cm(cols.data(), ckk, OH * OW);
      MatMap om(out.data() + static_cast<int64_t>(n) * OC * OH * OW, OC, OH * OW);
      om.noalias() = wm * cm;
    }
    if (b.defined()) {
      for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc) {
          double bias = b.value()[oc];
          double* p = out.data() + ((static_cast<int64_t>(n) * OC + oc) * OH) * OW;
          for (int i = 0; i < OH * OW; ++i) p[i] += bias;
        }
    }
  }
  std::vector<NodePtr> parents{x.node(), W.node()};
  if (b.defined()) parents.push_back(b.node());
  auto node = make_node(std::move(out), std::move(parents));
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr px = x.node(), pw = W.node();
    NodePtr pb = b.defined() ? b.node() : nullptr;
    node->backprop = [raw, px, pw, pb, N, C, H, Wd, OC, K, stride, pad, OH, OW, ckk]() {
      std::vector<double> cols(static_cast<size_t>(ckk) * OH * OW);
      for (int n = 0; n < N; ++n) {
        ConstMatMap gy(raw->grad.data() + static_cast<int64_t>(n) * OC * OH * OW, OC, OH * OW);
        if (pw->requires_grad || px->requires_grad) {
          if (pw->requires_grad) {
            im2col(px->value.data() + static_cast<int64_t>(n) * C * H * Wd, C, H, Wd, K, stride,
                   pad, OH, OW, cols.data());
            ConstMatMap cm(cols.data(), ckk, OH * OW);
            MatMap gw(pw->ensure_grad().data(), OC, ckk);
            gw.noalias() += gy * cm.transpose();
          }
          if (px->requires_grad) {
            ConstMatMap wm(pw->value.data(), OC, ckk);
            MatMap dcols(cols.data(), ckk, OH * OW);
            dcols.noalias() = wm.transpose() * gy;
            col2im(cols.data(), C, H, Wd, K, stride, pad, OH, OW,
                   px->ensure_grad().data() + static_cast<int64_t>(n) * C * H * Wd);
          }
        }
        if (pb && pb->requires_grad) {
          double* gb = pb->ensure_grad().data();
          for (int oc = 0; oc < OC; ++oc) {
            const double* p = raw->grad.data() + ((static_cast<int64_t>(n) * OC + oc) * OH) * OW;
            double s = 0.0;
            for (int i = 0; i < OH * OW; ++i) s += p[i];
            gb[oc] += s;
          }
        }
      }
    };
  }
  return Var(node);
}

Var conv_transpose2d(const Var& x, const Var& W, const Var& b, int stride, int pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = W.value();
  if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(0))
    throw ShapeError("conv_transpose2d: x " + xv.shape_str() + " vs W " + wv.shape_str());
  int N = xv.dim(0), IC = xv.dim(1), H = xv.dim(2), Wd = xv.dim(3);
  int OC = wv.dim(1), K = wv.dim(2);
  if (wv.dim(3) != K) throw ShapeError("conv_transpose2d: non-square kernel");
  int OH = (H - 1) * stride - 2 * pad + K;
  int OW = (Wd - 1) * stride - 2 * pad + K;
  if (OH <= 0 || OW <= 0) throw ShapeError("conv_transpose2d: output would be empty");

  int ockk = OC * K * K;
  Tensor out({N, OC, OH, OW});
  {
    std::vector<double> cols(static_cast<size_t>(ockk) * H * Wd);
    ConstMatMap wm(wv.data(), IC, ockk);
    for (int n = 0; n < N; ++n) {
      ConstMatMap xm(xv.data() + static_cast<int64_t>(n) * IC * H * Wd, IC, H * Wd);
      MatMap cm(cols.data(), ockk, H * Wd);
      cm.noalias() = wm.transpose() * xm;
      double* yp = out.data() + static_cast<int64_t>(n) * OC * OH * OW;
      // out is zero-initialized by the Tensor constructor
      col2im(cols.data(), OC, OH, OW, K, stride, pad, H, Wd, yp);
      if (b.defined()) {
        for (int oc = 0; oc < OC; ++oc) {
          double bias = b.value()[oc];
          double* p = yp + static_cast<int64_t>(oc) * OH * OW;
          for (int i = 0; i < OH * OW; ++i) p[i] += bias;
        }
      }
    }
  }
  std::vector<NodePtr> parents{x.node(), W.node()};
  if (b.defined()) parents.push_back(b.node());
  auto node = make_node(std::move(out), std::move(parents));
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr px = x.node(), pw = W.node();
    NodePtr pb = b.defined() ? b.node() : nullptr;
    node->backprop = [raw, px, pw, pb, N, IC, H, Wd, OC, K, stride, pad, OH, OW, ockk]() {
      std::vector<double> dcols(static_cast<size_t>(ockk) * H * Wd);
      for (int n = 0; n < N; ++n) {
        const double* gy = raw->grad.data() + static_cast<int64_t>(n) * OC * OH * OW;
        im2col(gy, OC, OH, OW, K, stride, pad, H, Wd, dcols.data());
        ConstMatMap dcm(dcols.data(), ockk, H * Wd);
        if (px->requires_grad) {
          ConstMatMap wm(pw->value.data(), IC, ockk);
          MatMap gx(px->ensure_grad().data() + static_cast<int64_t>(n) * IC * H * Wd, IC, H * Wd);
          gx.noalias() += wm * dcm;
        }
        if (pw->requires_grad) {
          ConstMatMap xm(px->value.data() + static_cast<int64_t>(n) * IC * H * Wd, IC, H * Wd);
          MatMap gw(pw->ensure_grad().data(), IC, ockk);
          gw.noalias() += xm * dcm.transpose();
        }
        if (pb && pb->requires_grad) {
          double* gb = pb->ensure_grad().data();
          for (int oc = 0; oc < OC; ++oc) {
            const double* p = gy + static_cast<int64_t>(oc) * OH * OW;
            double s = 0.0;
            for (int i = 0; i < OH * OW; ++i) s += p[i];
            gb[oc] += s;
          }
        }
      }
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, Tensor* running_mean,
                Tensor* running_var, bool training, double momentum, double eps) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 4) throw ShapeError("batchnorm2d: expected 4-d input");
  int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (gamma.value().numel() != C || beta.value().numel() != C)
    throw ShapeError("batchnorm2d: affine params must have C elements");
  int64_t plane = static_cast<int64_t>(H) * W;
  int64_t m = static_cast<int64_t>(N) * plane;

  std::vector<double> mean(C), inv_std(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = xv.data() + ((static_cast<int64_t>(n) * C + c)) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          s += p[i];
          s2 += p[i] * p[i];
        }
      }
      double mu = s / static_cast<double>(m);
      double var = s2 / static_cast<double>(m) - mu * mu;
      if (var < 0.0) var = 0.0;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      if (running_mean && running_var) {
        double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
        (*running_mean)[c] = (1.0 - momentum) * (*running_mean)[c] + momentum * mu;
        (*running_var)[c] = (1.0 - momentum) * (*running_var)[c] + momentum * unbiased;
      }
    }
  } else {
    if (!running_mean || !running_var)
      throw ShapeError("batchnorm2d: eval mode requires running stats");
    for (int c = 0; c < C; ++c) {
      mean[c] = (*running_mean)[c];
      inv_std[c] = 1.0 / std::sqrt((*running_var)[c] + eps);
    }
  }

  // Save normalized activations for the backward pass.
  auto xhat = std::make_shared<Tensor>(xv.shape());
  Tensor out(xv.shape());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* p = xv.data() + ((static_cast<int64_t>(n) * C + c)) * plane;
      double* xh = xhat->data() + ((static_cast<int64_t>(n) * C + c)) * plane;
      double* o = out.data() + ((static_cast<int64_t>(n) * C + c)) * plane;
      double g = gamma.value()[c], bta = beta.value()[c], mu = mean[c], is = inv_std[c];
      for (int64_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mu) * is;
        o[i] = g * xh[i] + bta;
      }
    }
  }

  auto node = make_node(std::move(out), {x.node(), gamma.node(), beta.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    NodePtr px = x.node(), pg = gamma.node(), pbt = beta.node();
    auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
    node->backprop = [raw, px, pg, pbt, xhat, istd, N, C, plane, m, training]() {
      for (int c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < N; ++n) {
          const double* dy = raw->grad.data() + ((static_cast<int64_t>(n) * C + c)) * plane;
          const double* xh = xhat->data() + ((static_cast<int64_t>(n) * C + c)) * plane;
          for (int64_t i = 0; i < plane; ++i) {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * xh[i];
          }
        }
        if (pg->requires_grad) pg->ensure_grad()[c] += sum_dy_xhat;
        if (pbt->requires_grad) pbt->ensure_grad()[c] += sum_dy;
        if (px->requires_grad) {
          double g = pg->value[c], is = (*istd)[c];
          double inv_m = 1.0 / static_cast<double>(m);
          for (int n = 0; n < N; ++n) {
            const double* dy = raw->grad.data() + ((static_cast<int64_t>(n) * C + c)) * plane;
            const double* xh = xhat->data() + ((static_cast<int64_t>(n) * C + c)) * plane;
            double* dx = px->ensure_grad().data() + ((static_cast<int64_t>(n) * C + c)) * plane;
            if (training) {
              for (int64_t i = 0; i < plane; ++i)
                dx[i] += g * is * (dy[i] - inv_m * sum_dy - xh[i] * inv_m * sum_dy_xhat);
            } else {
              for (int64_t i = 0; i < plane; ++i) dx[i] += g * is * dy[i];
            }
          }
        }
      }
    };
  }
  return Var(node);
}

}  // namespace nuq
