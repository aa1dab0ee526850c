#pragma once

#include <string>
#include <vector>

#include "nuq/distributions.hpp"
#include "nuq/model.hpp"

namespace nuq {

struct HyperpriorConfig {
  enum class Kind { kGamma, kUniform01 };
  Kind kind = Kind::kGamma;
  GammaHyperprior gamma;  // shape-rate; used when kind == kGamma

  static HyperpriorConfig from_strings(const std::string& kind, double shape, double rate);
  std::string kind_name() const { return kind == Kind::kGamma ? "gamma" : "uniform"; }
};

/// Named loss terms. The kl fields hold the raw (unweighted) divergences;
/// total applies the eta/gamma weights:
///   total = weighted_recon + neg_log_precision
///         + eta1*kl_latent + eta2*kl_hyper - gamma_adv*adv.
struct LossBreakdown {
  double weighted_recon = 0.0;     // sum_t 0.5 * b_t * ||xhat - x||^2
  double neg_log_precision = 0.0;  // sum_t -0.5 * log b_t
  double kl_latent = 0.0;          // sum_t KL(q_phi || p_psi)
  double kl_hyper = 0.0;           // sum_t KL(q_lambda || p(s)), 1-sample MC
  double adv = 0.0;                // discriminator loss value (0 without GAN)
  double total = 0.0;
  double eta1 = 0.0, eta2 = 0.0, gamma_adv = 0.0;

  std::vector<double> per_t_recon, per_t_neg_log_precision, per_t_kl_latent, per_t_kl_hyper;

  double recompose() const {
    return weighted_recon + neg_log_precision + eta1 * kl_latent + eta2 * kl_hyper -
           gamma_adv * adv;
  }
  std::string csv_row() const;
};

struct LossResult {
  Var total;  // scalar graph root (batch mean of per-sequence sums)
  LossBreakdown breakdown;
};

/// Hierarchical objective: per step 0.5*(b_t*err^2 - log b_t)
/// + eta1*KL(q_phi||p_psi) + eta2*KL(q_lambda||p(s)). The -E[log p_nu(b|s)]
/// term degenerates once b is the deterministic map 1/s and is dropped.
/// Squared error is summed over pixels.
LossResult nuq_loss(const TrainRollout& rollout, double eta1, double eta2,
                    const HyperpriorConfig& hyper);

/// Constant-precision baseline: per step 0.5*err^2 + eta1*KL(q_phi||p_psi).
LossResult fixed_precision_loss(const TrainRollout& rollout, double eta1);

enum class LossKind { kNuq, kFixedPrecision };

struct GradCheckResult {
  double max_rel_err = 0.0;
  int entries_checked = 0;
};

/// Central-difference gradient check with frozen stochastic draws. Samples up
/// to max_entries_per_param entries from every parameter tensor.
GradCheckResult grad_check(NuqModel& model, const Tensor& frames, int context_frames,
                           LossKind kind, double eps, const HyperpriorConfig& hyper, double eta1,
                           double eta2, int max_entries_per_param, uint64_t seed);

}  // namespace nuq
