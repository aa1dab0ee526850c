#pragma once

#include <cstdint>
#include <vector>

#include "nuq/autograd.hpp"
#include "nuq/rng.hpp"
#include "nuq/tensor.hpp"

namespace nuq {

/// Diagonal Gaussian: per-dimension mean and (strictly positive) variance.
struct GaussianParams {
  std::vector<double> mean;
  std::vector<double> variance;

  void validate() const;
  size_t dim() const { return mean.size(); }
};

/// Location/scale of the positive-truncated normal posterior over the latent
/// scale s. `alpha` is the pre-truncation location (the paper calls it the
/// mean, which only holds far from the boundary), `beta` the scale.
struct TruncNormalParams {
  double alpha = 0.0;  // >= 0
  double beta = 1.0;   // > 0

  void validate() const;
};

/// Gamma hyperprior in the shape-rate convention: density(s) proportional to
/// s^(shape-1) * exp(-rate * s). Shape-scale is never used in this codebase.
struct GammaHyperprior {
  double shape = 2.0;
  double rate = 1.0;

  void validate() const;
};

/// Support floor for the truncated-normal sampler. The precision b = 1/s
/// blows up as s -> 0, so sampling is restricted to [s_min, inf).
inline constexpr double kDefaultSMin = 1e-3;
/// Rejection retry budget per draw; starvation raises SamplingError.
inline constexpr int kRejectionRetryCap = 100;

/// z = mean + sqrt(variance) * noise. `noise` must match the dimension.
std::vector<double> reparam_gaussian_sample(const GaussianParams& p,
                                            const std::vector<double>& noise);

/// Closed-form KL(q || p) for diagonal Gaussians. Non-negative, zero iff q=p.
double kl_diag_gaussian(const GaussianParams& q, const GaussianParams& p);

struct TruncNormalSample {
  double s;    // accepted value, >= s_min
  double eps;  // the accepted standard-normal draw; s = alpha + beta * eps
};

/// Rejection sampling: draw standard normals until alpha + beta*eps >= s_min.
TruncNormalSample sample_trunc_normal(const TruncNormalParams& p, Rng& rng,
                                      double s_min = kDefaultSMin);

/// Log-density of the normal(alpha, beta^2) renormalized to [0, inf).
double trunc_normal_logpdf(double s, const TruncNormalParams& p);

/// Log-density of the gamma hyperprior (shape-rate convention).
double gamma_logpdf(double s, const GammaHyperprior& h);

/// Monte-Carlo estimate of KL(q || h) over reparameterized truncated-normal
/// samples: mean of [log q(s_i) - log p(s_i)].
double kl_truncnorm_gamma(const TruncNormalParams& q, const GammaHyperprior& h, int num_samples,
                          uint64_t seed, double s_min = kDefaultSMin);

/// Analytic moments of the truncated normal restricted to [s_min, inf); the
/// oracle the sampler's empirical moments are tested against.
struct TruncNormalMoments {
  double mean;
  double variance;
};
TruncNormalMoments trunc_normal_moments(const TruncNormalParams& p, double s_min = kDefaultSMin);

double normal_pdf(double x);
double normal_cdf(double x);

// ---- graph-building counterparts used inside the training losses ----

/// Per-sample closed-form KL between diagonal Gaussians given [N,g] tensors of
/// means and log-variances. Returns [N].
Var kl_diag_gaussian_var(const Var& mu_q, const Var& logvar_q, const Var& mu_p,
                         const Var& logvar_p);

/// Per-sample z = mu + exp(0.5*logvar) * eps with eps entering as a constant.
Var reparam_gaussian_sample_var(const Var& mu, const Var& logvar, const Tensor& eps);

/// Elementwise truncated-normal log-density of s under (alpha, beta), all [N].
Var trunc_normal_logpdf_var(const Var& s, const Var& alpha, const Var& beta);

/// Elementwise gamma log-density of s [N] under a fixed hyperprior.
Var gamma_logpdf_var(const Var& s, const GammaHyperprior& h);

/// Elementwise Uniform[0,1] surrogate log-density: 0 on the support, a steep
/// finite linear penalty outside so the loss stays differentiable and finite.
Var uniform01_logpdf_var(const Var& s);

}  // namespace nuq
