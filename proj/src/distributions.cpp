#include "nuq/distributions.hpp"

#include <cmath>
#include <string>

#include "nuq/errors.hpp"

namespace nuq {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kHalfLog2Pi = 0.9189385332046727417803297364056;
}  // namespace

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * 0.3989422804014326779399460599344;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244008443621048); }

void GaussianParams::validate() const {
  if (mean.size() != variance.size())
    throw ShapeError("GaussianParams: mean/variance dimension mismatch");
  for (double m : mean)
    if (!std::isfinite(m)) throw DomainError("GaussianParams: non-finite mean");
  for (double v : variance)
    if (!(v > 0.0) || !std::isfinite(v))
      throw DomainError("GaussianParams: variance must be positive and finite");
}

void TruncNormalParams::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw DomainError("TruncNormalParams: alpha must be >= 0 and finite");
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw DomainError("TruncNormalParams: beta must be > 0 and finite");
}

void GammaHyperprior::validate() const {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
    throw DomainError("GammaHyperprior: shape and rate must be positive and finite");
}

std::vector<double> reparam_gaussian_sample(const GaussianParams& p,
                                            const std::vector<double>& noise) {
  p.validate();
  if (noise.size() != p.dim())
    throw ShapeError("reparam_gaussian_sample: noise dimension " + std::to_string(noise.size()) +
                     " vs latent dimension " + std::to_string(p.dim()));
  std::vector<double> z(p.dim());
  for (size_t i = 0; i < z.size(); ++i) z[i] = p.mean[i] + std::sqrt(p.variance[i]) * noise[i];
  return z;
}

double kl_diag_gaussian(const GaussianParams& q, const GaussianParams& p) {
  q.validate();
  p.validate();
  if (q.dim() != p.dim()) throw ShapeError("kl_diag_gaussian: dimension mismatch");
  double kl = 0.0;
  for (size_t i = 0; i < q.dim(); ++i) {
    double vq = q.variance[i], vp = p.variance[i];
    double dm = q.mean[i] - p.mean[i];
    kl += 0.5 * (std::log(vp / vq) + (vq + dm * dm) / vp - 1.0);
  }
  return kl;
}

TruncNormalSample sample_trunc_normal(const TruncNormalParams& p, Rng& rng, double s_min) {
  p.validate();
  for (int attempt = 0; attempt < kRejectionRetryCap; ++attempt) {
    double eps = rng.normal();
    double s = p.alpha + p.beta * eps;
    if (s >= s_min) return {s, eps};
  }
  throw SamplingError("sample_trunc_normal: no acceptance in " +
                      std::to_string(kRejectionRetryCap) + " draws (alpha=" +
                      std::to_string(p.alpha) + ", beta=" + std::to_string(p.beta) + ")");
}

double trunc_normal_logpdf(double s, const TruncNormalParams& p) {
  p.validate();
  if (!(s > 0.0)) throw DomainError("trunc_normal_logpdf: s must be positive");
  double z = (s - p.alpha) / p.beta;
  double log_tail = std::log(normal_cdf(p.alpha / p.beta));  // 1 - Phi(-a/b) = Phi(a/b)
  return -kHalfLog2Pi - std::log(p.beta) - 0.5 * z * z - log_tail;
}

double gamma_logpdf(double s, const GammaHyperprior& h) {
  h.validate();
  if (!(s > 0.0)) throw DomainError("gamma_logpdf: s must be positive");
  return h.shape * std::log(h.rate) - std::lgamma(h.shape) + (h.shape - 1.0) * std::log(s) -
         h.rate * s;
}

double kl_truncnorm_gamma(const TruncNormalParams& q, const GammaHyperprior& h, int num_samples,
                          uint64_t seed, double s_min) {
  if (num_samples < 1) throw ConfigError("kl_truncnorm_gamma: num_samples must be >= 1");
  Rng rng(seed);
  double acc = 0.0;
  for (int i = 0; i < num_samples; ++i) {
    double s = sample_trunc_normal(q, rng, s_min).s;
    acc += trunc_normal_logpdf(s, q) - gamma_logpdf(s, h);
  }
  return acc / static_cast<double>(num_samples);
}

TruncNormalMoments trunc_normal_moments(const TruncNormalParams& p, double s_min) {
  p.validate();
  double a = (s_min - p.alpha) / p.beta;
  double lambda = normal_pdf(a) / (1.0 - normal_cdf(a));
  double mean = p.alpha + p.beta * lambda;
  double variance = p.beta * p.beta * (1.0 + a * lambda - lambda * lambda);
  return {mean, variance};
}

// ---------------------------------------------------------------------------
// graph-building versions
// ---------------------------------------------------------------------------

Var kl_diag_gaussian_var(const Var& mu_q, const Var& logvar_q, const Var& mu_p,
                         const Var& logvar_p) {
  // 0.5 * sum_d [ logvar_p - logvar_q + (var_q + (mu_q-mu_p)^2) / var_p - 1 ]
  Var diff2 = square(sub(mu_q, mu_p));
  Var ratio = mul(add(exp_v(logvar_q), diff2), exp_v(neg(logvar_p)));
  Var terms = add_scalar(add(sub(logvar_p, logvar_q), ratio), -1.0);
  return mul_scalar(sum_per_sample(terms), 0.5);
}

Var reparam_gaussian_sample_var(const Var& mu, const Var& logvar, const Tensor& eps) {
  return add(mu, mul(exp_v(mul_scalar(logvar, 0.5)), constant(eps)));
}

Var trunc_normal_logpdf_var(const Var& s, const Var& alpha, const Var& beta) {
  Var z = mul(sub(s, alpha), reciprocal(beta));
  Var base = add_scalar(neg(add(log_v(beta), mul_scalar(square(z), 0.5))), -kHalfLog2Pi);
  return sub(base, log_norm_cdf_ratio(alpha, beta));
}

Var gamma_logpdf_var(const Var& s, const GammaHyperprior& h) {
  h.validate();
  double norm = h.shape * std::log(h.rate) - std::lgamma(h.shape);
  Var body = sub(mul_scalar(log_v(s), h.shape - 1.0), mul_scalar(s, h.rate));
  return add_scalar(body, norm);
}

Var uniform01_logpdf_var(const Var& s) {
  // Flat on [0,1]; linear slope 50 outside keeps the KL term finite while
  // still pushing samples back into the support.
  constexpr double kSlope = 50.0;
  Var over = mul_scalar(sub(s, clamp(s, -1e30, 1.0)), -kSlope);
  Var under = mul_scalar(sub(clamp(s, 0.0, 1e30), s), -kSlope);
  return add(over, under);
}

}  // namespace nuq
