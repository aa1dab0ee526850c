#include "nuq/losses.hpp"

#include <cmath>
#include <sstream>

#include "nuq/errors.hpp"

namespace nuq {

HyperpriorConfig HyperpriorConfig::from_strings(const std::string& kind, double shape,
                                                double rate) {
  HyperpriorConfig h;
  if (kind == "gamma") {
    h.kind = Kind::kGamma;
    h.gamma = GammaHyperprior{shape, rate};
    h.gamma.validate();
  } else if (kind == "uniform") {
    h.kind = Kind::kUniform01;
  } else {
    throw ConfigError("unknown hyperprior kind: " + kind + " (expected gamma | uniform)");
  }
  return h;
}

std::string LossBreakdown::csv_row() const {
  std::ostringstream os;
  os << total << "," << weighted_recon << "," << neg_log_precision << "," << kl_latent << ","
     << kl_hyper << "," << adv;
  return os.str();
}

namespace {

double batch_mean(const Var& per_sample) {
  const Tensor& v = per_sample.value();
  return v.sum() / static_cast<double>(v.numel());
}

void check_alignment(const TrainRollout& rollout) {
  if (rollout.steps.empty()) throw ShapeError("loss: rollout has no predicted steps");
  if (rollout.steps.size() != rollout.targets.size())
    throw ShapeError("loss: rollout/targets misaligned (" + std::to_string(rollout.steps.size()) +
                     " vs " + std::to_string(rollout.targets.size()) + ")");
  for (size_t t = 0; t < rollout.steps.size(); ++t) {
    if (!rollout.steps[t].xhat.value().same_shape(rollout.targets[t]))
      throw ShapeError("loss: xhat/target shape mismatch at step " + std::to_string(t));
  }
}

Var hyper_logpdf(const Var& s, const HyperpriorConfig& hyper) {
  if (hyper.kind == HyperpriorConfig::Kind::kGamma) return gamma_logpdf_var(s, hyper.gamma);
  return uniform01_logpdf_var(s);
}

}  // namespace

LossResult nuq_loss(const TrainRollout& rollout, double eta1, double eta2,
                    const HyperpriorConfig& hyper) {
  check_alignment(rollout);
  LossResult res;
  LossBreakdown& bd = res.breakdown;
  bd.eta1 = eta1;
  bd.eta2 = eta2;

  Var acc;  // per-sample accumulated loss [B]
  for (size_t t = 0; t < rollout.steps.size(); ++t) {
    const RolloutStep& step = rollout.steps[t];
    Var err2 = sum_per_sample(square(sub(step.xhat, constant(rollout.targets[t]))));
    Var recon, nlp;
    if (step.b.defined()) {
      recon = mul_scalar(mul(step.b, err2), 0.5);
      nlp = mul_scalar(log_v(step.b), -0.5);
    } else {
      // Degenerate b = 1 (used by the structural-identity tests).
      recon = mul_scalar(err2, 0.5);
      nlp = constant(Tensor(err2.value().shape(), 0.0));
    }
    Var klz = kl_diag_gaussian_var(step.post_mu, step.post_logvar, step.prior_mu,
                                   step.prior_logvar);
    Var step_sum = add(add(recon, nlp), mul_scalar(klz, eta1));

    double kls_mean = 0.0;
    if (step.s.defined()) {
      Var kls = sub(trunc_normal_logpdf_var(step.s, step.alpha, step.beta),
                    hyper_logpdf(step.s, hyper));
      step_sum = add(step_sum, mul_scalar(kls, eta2));
      kls_mean = batch_mean(kls);
    }
    acc = acc.defined() ? add(acc, step_sum) : step_sum;

    double recon_mean = batch_mean(recon);
    double nlp_mean = batch_mean(nlp);
    double klz_mean = batch_mean(klz);
    bd.weighted_recon += recon_mean;
    bd.neg_log_precision += nlp_mean;
    bd.kl_latent += klz_mean;
    bd.kl_hyper += kls_mean;
    bd.per_t_recon.push_back(recon_mean);
    bd.per_t_neg_log_precision.push_back(nlp_mean);
    bd.per_t_kl_latent.push_back(klz_mean);
    bd.per_t_kl_hyper.push_back(kls_mean);
  }
  res.total = mean_all(acc);
  bd.total = res.total.value()[0];
  return res;
}

LossResult fixed_precision_loss(const TrainRollout& rollout, double eta1) {
  check_alignment(rollout);
  LossResult res;
  LossBreakdown& bd = res.breakdown;
  bd.eta1 = eta1;

  Var acc;
  for (size_t t = 0; t < rollout.steps.size(); ++t) {
    const RolloutStep& step = rollout.steps[t];
    Var err2 = sum_per_sample(square(sub(step.xhat, constant(rollout.targets[t]))));
    Var recon = mul_scalar(err2, 0.5);
    Var klz = kl_diag_gaussian_var(step.post_mu, step.post_logvar, step.prior_mu,
                                   step.prior_logvar);
    Var step_sum = add(recon, mul_scalar(klz, eta1));
    acc = acc.defined() ? add(acc, step_sum) : step_sum;

    double recon_mean = batch_mean(recon);
    double klz_mean = batch_mean(klz);
    bd.weighted_recon += recon_mean;
    bd.kl_latent += klz_mean;
    bd.per_t_recon.push_back(recon_mean);
    bd.per_t_neg_log_precision.push_back(0.0);
    bd.per_t_kl_latent.push_back(klz_mean);
    bd.per_t_kl_hyper.push_back(0.0);
  }
  res.total = mean_all(acc);
  bd.total = res.total.value()[0];
  return res;
}

GradCheckResult grad_check(NuqModel& model, const Tensor& frames, int context_frames,
                           LossKind kind, double eps, const HyperpriorConfig& hyper, double eta1,
                           double eta2, int max_entries_per_param, uint64_t seed) {
  Variant variant = kind == LossKind::kNuq ? Variant::kNuq : Variant::kFixedPrecision;
  NoiseTrace trace;

  auto compute = [&](bool build_graph) -> LossResult {
    TrainRollout rollout = model.rollout_train(frames, context_frames, seed, variant,
                                               /*training=*/true, &trace);
    (void)build_graph;
    return kind == LossKind::kNuq ? nuq_loss(rollout, eta1, eta2, hyper)
                                  : fixed_precision_loss(rollout, eta1);
  };

  // Analytic pass (captures the noise trace).
  LossResult loss = compute(true);
  if (!std::isfinite(loss.breakdown.total))
    throw NumericError("grad_check: non-finite loss value");
  for (auto& [name, p] : model.params().items) p.zero_grad();
  backward(loss.total);

  std::vector<Tensor> analytic;
  for (auto& [name, p] : model.params().items) analytic.push_back(p.grad());

  trace.replay = true;
  auto eval_loss = [&]() -> double {
    double v = compute(false).breakdown.total;
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss during perturbation");
    return v;
  };

  GradCheckResult result;
  size_t pi = 0;
  for (auto& [name, p] : model.params().items) {
    Tensor& w = p.value_mut();
    int64_t n = w.numel();
    int64_t stride = 1;
    if (max_entries_per_param > 0 && n > max_entries_per_param)
      stride = n / max_entries_per_param;
    for (int64_t i = 0; i < n; i += stride) {
      double orig = w[i];
      w[i] = orig + eps;
      double lp = eval_loss();
      w[i] = orig - eps;
      double lm = eval_loss();
      w[i] = orig;
      double fd = (lp - lm) / (2.0 * eps);
      double rel = std::abs(analytic[pi][i] - fd) / (std::abs(fd) + 1e-8);
      if (rel > result.max_rel_err) result.max_rel_err = rel;
      ++result.entries_checked;
    }
    ++pi;
  }
  return result;
}

}  // namespace nuq
