#include "nuq/model.hpp"

#include <cmath>

#include "nuq/errors.hpp"

namespace nuq {

void ModelConfig::validate() const {
  if (levels < 1) throw ConfigError("ModelConfig.levels must be >= 1");
  if (canvas % (1 << levels) != 0)
    throw ConfigError("ModelConfig.canvas " + std::to_string(canvas) +
                      " not divisible by 2^levels = " + std::to_string(1 << levels));
  if (base_width < 1) throw ConfigError("ModelConfig.base_width must be >= 1");
  if (g < 1) throw ConfigError("ModelConfig.g must be >= 1");
  if (hidden < 1) throw ConfigError("ModelConfig.hidden must be >= 1");
  if (var_hidden < 1) throw ConfigError("ModelConfig.var_hidden must be >= 1");
  if (!(smin > 0.0)) throw ConfigError("ModelConfig.smin must be positive");
  if (!(beta_floor > 0.0)) throw ConfigError("ModelConfig.beta_floor must be positive");
}

Variant variant_from_string(const std::string& s) {
  if (s == "nuq") return Variant::kNuq;
  if (s == "fixed" || s == "fixed-precision") return Variant::kFixedPrecision;
  throw ConfigError("unknown model variant: " + s + " (expected nuq | fixed)");
}

const char* variant_name(Variant v) {
  return v == Variant::kNuq ? "nuq" : "fixed";
}

// ---------------------------------------------------------------------------
// encoder / decoder
// ---------------------------------------------------------------------------

void FrameEncoder::init(const ModelConfig& cfg, Rng& rng) {
  levels_ = cfg.levels;
  final_spatial_ = cfg.final_spatial();
  final_channels_ = cfg.final_channels();
  convs_.resize(static_cast<size_t>(levels_));
  bns_.resize(static_cast<size_t>(levels_));
  for (int i = 0; i < levels_; ++i) {
    int in_c = i == 0 ? 1 : cfg.base_width << (i - 1);
    int out_c = cfg.base_width << i;
    convs_[static_cast<size_t>(i)].init(in_c, out_c, rng, /*bias=*/false);  // bn follows
    bns_[static_cast<size_t>(i)].init(out_c);
  }
  head_.init(final_channels_ * final_spatial_ * final_spatial_, cfg.g, rng);
}

EncoderOut FrameEncoder::forward(const Var& x, bool training) {
  if (x.value().ndim() != 4 || x.value().dim(1) != 1)
    throw ShapeError("FrameEncoder: expected [N,1,H,W], got " + x.value().shape_str());
  int side = x.value().dim(2);
  if (x.value().dim(3) != side || side % (1 << levels_) != 0)
    throw ShapeError("FrameEncoder: spatial dims " + x.value().shape_str() +
                     " not divisible by 2^" + std::to_string(levels_));
  EncoderOut out;
  Var h = x;
  for (int i = 0; i < levels_; ++i) {
    h = convs_[static_cast<size_t>(i)].forward(h);
    h = bns_[static_cast<size_t>(i)].forward(h, training);
    h = leaky_relu(h, 0.2);
    out.skips.push_back(h);
  }
  int n = h.value().dim(0);
  Var flat = reshape(h, {n, final_channels_ * final_spatial_ * final_spatial_});
  out.feature = tanh_v(head_.forward(flat));
  return out;
}

void FrameEncoder::register_params(ParamDict& pd, const std::string& prefix) const {
  for (int i = 0; i < levels_; ++i) {
    std::string p = prefix + "/conv" + std::to_string(i);
    convs_[static_cast<size_t>(i)].register_params(pd, p);
    bns_[static_cast<size_t>(i)].register_params(pd, p + "/bn");
  }
  head_.register_params(pd, prefix + "/head");
}

void FrameEncoder::register_buffers(BufferDict& bd, const std::string& prefix) {
  for (int i = 0; i < levels_; ++i)
    bns_[static_cast<size_t>(i)].register_buffers(bd, prefix + "/conv" + std::to_string(i) + "/bn");
}

void FrameDecoder::init(const ModelConfig& cfg, Rng& rng) {
  levels_ = cfg.levels;
  final_spatial_ = cfg.final_spatial();
  final_channels_ = cfg.final_channels();
  head_.init(cfg.hidden, final_channels_ * final_spatial_ * final_spatial_, rng,
             /*bias=*/false);  // bn follows
  head_bn_.init(final_channels_);
  ups_.resize(static_cast<size_t>(levels_));
  bns_.resize(static_cast<size_t>(levels_));
  for (int i = levels_ - 1; i >= 0; --i) {
    int cur_c = cfg.base_width << i;
    int out_c = i > 0 ? cfg.base_width << (i - 1) : 1;
    size_t idx = static_cast<size_t>(levels_ - 1 - i);
    // Doubled input width: the matching encoder skip is concatenated. All but
    // the output stage feed a bn, so only the output stage keeps a bias.
    ups_[idx].init(2 * cur_c, out_c, rng, /*bias=*/i == 0);
    if (i > 0) bns_[idx].init(out_c);
  }
}

Var FrameDecoder::forward(const Var& core, const std::vector<Var>& skips, bool training) {
  if (core.value().ndim() != 2)
    throw ShapeError("FrameDecoder: expected [N,hidden] core input");
  if (static_cast<int>(skips.size()) != levels_)
    throw ShapeError("FrameDecoder: expected " + std::to_string(levels_) + " skips, got " +
                     std::to_string(skips.size()));
  int n = core.value().dim(0);
  Var h = head_.forward(core);
  h = reshape(h, {n, final_channels_, final_spatial_, final_spatial_});
  h = leaky_relu(head_bn_.forward(h, training), 0.2);
  for (int i = levels_ - 1; i >= 0; --i) {
    size_t idx = static_cast<size_t>(levels_ - 1 - i);
    h = concat_dim1(h, skips[static_cast<size_t>(i)]);
    h = ups_[idx].forward(h);
    if (i > 0) {
      h = leaky_relu(bns_[idx].forward(h, training), 0.2);
    } else {
      h = sigmoid(h);
    }
  }
  return h;
}

void FrameDecoder::register_params(ParamDict& pd, const std::string& prefix) const {
  head_.register_params(pd, prefix + "/head");
  head_bn_.register_params(pd, prefix + "/head_bn");
  for (size_t i = 0; i < ups_.size(); ++i) {
    std::string p = prefix + "/up" + std::to_string(i);
    ups_[i].register_params(pd, p);
    if (i + 1 < ups_.size()) bns_[i].register_params(pd, p + "/bn");
  }
}

void FrameDecoder::register_buffers(BufferDict& bd, const std::string& prefix) {
  head_bn_.register_buffers(bd, prefix + "/head_bn");
  for (size_t i = 0; i + 1 < ups_.size(); ++i)
    bns_[i].register_buffers(bd, prefix + "/up" + std::to_string(i) + "/bn");
}

// ---------------------------------------------------------------------------
// recurrent cores
// ---------------------------------------------------------------------------

void GaussianLstm::init(int g, int hidden, double logvar_clamp, Rng& rng) {
  hidden_ = hidden;
  logvar_clamp_ = logvar_clamp;
  embed_.init(g, hidden, rng);
  cell_.init(hidden, hidden, rng);
  mu_head_.init(hidden, g, rng);
  logvar_head_.init(hidden, g, rng);
}

std::pair<GaussianHead, LstmState> GaussianLstm::step(const Var& feature,
                                                      const LstmState& state) const {
  Var e = embed_.forward(feature);
  LstmState next = cell_.forward(e, state);
  GaussianHead head;
  head.mu = mu_head_.forward(next.h);
  head.logvar = clamp(logvar_head_.forward(next.h), -logvar_clamp_, logvar_clamp_);
  return {head, next};
}

void GaussianLstm::register_params(ParamDict& pd, const std::string& prefix) const {
  embed_.register_params(pd, prefix + "/embed");
  cell_.register_params(pd, prefix + "/lstm");
  mu_head_.register_params(pd, prefix + "/mu");
  logvar_head_.register_params(pd, prefix + "/logvar");
}

void Predictor::init(int g, int hidden, Rng& rng) {
  hidden_ = hidden;
  embed_.init(2 * g, hidden, rng);
  cell1_.init(hidden, hidden, rng);
  cell2_.init(hidden, hidden, rng);
  out_.init(hidden, hidden, rng);
}

std::pair<Var, Predictor::State> Predictor::step(const Var& feature, const Var& z,
                                                 const State& state) const {
  if (feature.value().dim(0) != z.value().dim(0))
    throw ShapeError("Predictor: feature/z batch mismatch");
  Var e = embed_.forward(concat_dim1(feature, z));
  State next;
  next.l1 = cell1_.forward(e, state.l1);
  next.l2 = cell2_.forward(next.l1.h, state.l2);
  return {tanh_v(out_.forward(next.l2.h)), next};
}

Predictor::State Predictor::initial_state(int batch) const {
  return {LstmState::zeros(batch, hidden_), LstmState::zeros(batch, hidden_)};
}

void Predictor::register_params(ParamDict& pd, const std::string& prefix) const {
  embed_.register_params(pd, prefix + "/embed");
  cell1_.register_params(pd, prefix + "/lstm1");
  cell2_.register_params(pd, prefix + "/lstm2");
  out_.register_params(pd, prefix + "/out");
}

void VarianceEncoder::init(int g, int var_hidden, double beta_floor, Rng& rng) {
  beta_floor_ = beta_floor;
  l1_.init(g, var_hidden, rng);
  l2_.init(var_hidden, 2, rng);
}

std::pair<Var, Var> VarianceEncoder::forward(const Var& sigma_diag) const {
  if (!sigma_diag.value().all_finite())
    throw DomainError("VarianceEncoder: non-finite variance input");
  int n = sigma_diag.value().dim(0);
  Var h = leaky_relu(l1_.forward(sigma_diag), 0.2);
  Var raw = l2_.forward(h);  // [N,2]
  Var alpha = reshape(softplus(slice_dim1(raw, 0, 1)), {n});
  Var beta = add_scalar(reshape(softplus(slice_dim1(raw, 1, 2)), {n}), beta_floor_);
  return {alpha, beta};
}

void VarianceEncoder::register_params(ParamDict& pd, const std::string& prefix) const {
  l1_.register_params(pd, prefix + "/fc1");
  l2_.register_params(pd, prefix + "/fc2");
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

NuqModel::NuqModel(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, {0xA11}));
  encoder_.init(cfg_, rng);
  decoder_.init(cfg_, rng);
  predictor_.init(cfg_.g, cfg_.hidden, rng);
  prior_.init(cfg_.g, cfg_.hidden, cfg_.logvar_clamp, rng);
  posterior_.init(cfg_.g, cfg_.hidden, cfg_.logvar_clamp, rng);
  var_encoder_.init(cfg_.g, cfg_.var_hidden, cfg_.beta_floor, rng);

  encoder_.register_params(params_, "model/theta/encoder");
  decoder_.register_params(params_, "model/theta/decoder");
  predictor_.register_params(params_, "model/theta/predictor");
  prior_.register_params(params_, "model/psi/prior");
  posterior_.register_params(params_, "model/phi/posterior");
  var_encoder_.register_params(params_, "model/lambda/var_encoder");
  encoder_.register_buffers(buffers_, "model/theta/encoder");
  decoder_.register_buffers(buffers_, "model/theta/decoder");
}

std::vector<Var> NuqModel::parameter_vars() const {
  std::vector<Var> vars;
  for (const auto& [name, v] : params_.items) vars.push_back(v);
  return vars;
}

std::vector<Var> NuqModel::group_vars(const std::string& group) const {
  std::vector<Var> vars;
  std::string tag = "model/" + group + "/";
  for (const auto& [name, v] : params_.items)
    if (name.rfind(tag, 0) == 0) vars.push_back(v);
  return vars;
}

namespace {

// Gathers frame t across the batch: [B,L,1,H,W] -> [B,1,H,W].
Tensor batch_frame(const Tensor& frames, int t) {
  int B = frames.dim(0), H = frames.dim(3), W = frames.dim(4);
  Tensor out({B, 1, H, W});
  int64_t plane = static_cast<int64_t>(H) * W;
  for (int b = 0; b < B; ++b) {
    const double* src = frames.data() + (static_cast<int64_t>(b) * frames.dim(1) + t) * plane;
    std::copy_n(src, plane, out.data() + static_cast<int64_t>(b) * plane);
  }
  return out;
}

Tensor draw_eps(int rows, int cols, Rng& rng) {
  Tensor eps = cols > 0 ? Tensor({rows, cols}) : Tensor({rows});
  for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = rng.normal();
  return eps;
}

}  // namespace

TrainRollout NuqModel::rollout_train(const Tensor& frames, int context_frames, uint64_t seed,
                                     Variant variant, bool training, NoiseTrace* trace) {
  if (frames.ndim() != 5 || frames.dim(2) != 1)
    throw ShapeError("rollout_train: expected [B,L,1,H,W], got " + frames.shape_str());
  int B = frames.dim(0), L = frames.dim(1);
  if (context_frames < 1 || context_frames >= L)
    throw ConfigError("rollout_train: need 1 <= F < total_len");
  Rng rng(derive_seed(seed, {0x707}));
  bool replay = trace && trace->replay;
  if (trace) {
    trace->rewind();
    if (!replay) {
      trace->eps_z.clear();
      trace->eps_s.clear();
    }
  }

  auto next_eps_z = [&]() -> Tensor {
    if (replay) return trace->eps_z.at(trace->cursor_z++);
    Tensor e = draw_eps(B, cfg_.g, rng);
    if (trace) trace->eps_z.push_back(e);
    return e;
  };

  // Encode every frame once; skips are held at the last context frame.
  std::vector<Var> features;
  std::vector<Var> held_skips;
  for (int t = 0; t < L; ++t) {
    EncoderOut enc = encoder_.forward(constant(batch_frame(frames, t)), training);
    features.push_back(enc.feature);
    if (t == context_frames - 1) held_skips = enc.skips;
  }

  TrainRollout rollout;
  rollout.context_frames = context_frames;
  rollout.smin = cfg_.smin;
  rollout.variant = variant;
  LstmState prior_state = prior_.initial_state(B);
  LstmState post_state = posterior_.initial_state(B);
  Predictor::State pred_state = predictor_.initial_state(B);

  for (int t = 1; t < L; ++t) {
    auto [prior_head, prior_next] = prior_.step(features[static_cast<size_t>(t - 1)], prior_state);
    auto [post_head, post_next] = posterior_.step(features[static_cast<size_t>(t)], post_state);
    prior_state = prior_next;
    post_state = post_next;
    Tensor eps_z = next_eps_z();
    Var z = reparam_gaussian_sample_var(post_head.mu, post_head.logvar, eps_z);
    auto [core, pred_next] = predictor_.step(features[static_cast<size_t>(t - 1)], z, pred_state);
    pred_state = pred_next;
    if (t < context_frames) continue;  // warm-up: states advance, no loss emitted

    RolloutStep step;
    step.prior_mu = prior_head.mu;
    step.prior_logvar = prior_head.logvar;
    step.post_mu = post_head.mu;
    step.post_logvar = post_head.logvar;
    step.z = z;

    if (variant == Variant::kNuq) {
      Var sigma = exp_v(step.prior_logvar);
      if (cfg_.detach_sigma) sigma = detach(sigma);
      auto [alpha, beta] = var_encoder_.forward(sigma);
      Tensor eps_s;
      if (replay) {
        eps_s = trace->eps_s.at(trace->cursor_s++);
      } else {
        eps_s = Tensor({B});
        for (int bi = 0; bi < B; ++bi) {
          TruncNormalParams p{alpha.value()[bi], beta.value()[bi]};
          eps_s[bi] = sample_trunc_normal(p, rng, cfg_.smin).eps;
        }
        if (trace) trace->eps_s.push_back(eps_s);
      }
      step.alpha = alpha;
      step.beta = beta;
      step.s = add(alpha, mul(beta, constant(eps_s)));
      step.b = reciprocal(step.s);
    }

    step.xhat = decoder_.forward(core, held_skips, training);
    rollout.steps.push_back(step);
    rollout.targets.push_back(batch_frame(frames, t));
  }
  rollout.prior_state = prior_state;
  rollout.post_state = post_state;
  rollout.predictor_state = pred_state;
  return rollout;
}

GenResult NuqModel::rollout_generate(const Tensor& context, int steps, int num_futures,
                                     uint64_t seed) {
  if (context.ndim() != 4 || context.dim(1) != 1)
    throw ShapeError("rollout_generate: expected context [F,1,H,W], got " + context.shape_str());
  if (steps < 1) throw ConfigError("rollout_generate: steps must be >= 1");
  if (num_futures < 1) throw ConfigError("rollout_generate: num_futures must be >= 1");
  NoGradGuard no_grad;

  int F = context.dim(0), H = context.dim(2), W = context.dim(3);
  int K = num_futures;
  // Futures run batched, but each future draws from its own seed stream so
  // prefix sets are identical whatever num_futures is.
  std::vector<Rng> rngs;
  for (int f = 0; f < K; ++f) rngs.emplace_back(derive_seed(seed, {0x9E4, static_cast<uint64_t>(f)}));

  // Replicate context frame t across the future-batch: [F,1,H,W] -> [K,1,H,W].
  auto replicate = [&](int t) {
    Tensor out({K, 1, H, W});
    int64_t plane = static_cast<int64_t>(H) * W;
    const double* src = context.data() + static_cast<int64_t>(t) * plane;
    for (int f = 0; f < K; ++f) std::copy_n(src, plane, out.data() + static_cast<int64_t>(f) * plane);
    return out;
  };

  LstmState prior_state = prior_.initial_state(K);
  Predictor::State pred_state = predictor_.initial_state(K);
  std::vector<Var> held_skips;
  Var prev_feature;

  GenResult result;
  result.futures.assign(static_cast<size_t>(K), {});
  result.s_traces.assign(static_cast<size_t>(K), {});

  auto draw_z = [&](const GaussianHead& head) {
    Tensor eps({K, cfg_.g});
    for (int f = 0; f < K; ++f)
      for (int d = 0; d < cfg_.g; ++d) eps.at(f, d) = rngs[static_cast<size_t>(f)].normal();
    return reparam_gaussian_sample_var(head.mu, head.logvar, eps);
  };

  // Warm up on the context; the predictor consumes ground truth here.
  for (int t = 0; t < F; ++t) {
    EncoderOut enc = encoder_.forward(constant(replicate(t)), false);
    if (t == F - 1) held_skips = enc.skips;
    if (t >= 1) {
      auto [head, prior_next] = prior_.step(prev_feature, prior_state);
      prior_state = prior_next;
      Var z = draw_z(head);
      auto [core, pred_next] = predictor_.step(prev_feature, z, pred_state);
      pred_state = pred_next;
      (void)core;
    }
    prev_feature = enc.feature;
  }

  for (int t = 0; t < steps; ++t) {
    auto [head, prior_next] = prior_.step(prev_feature, prior_state);
    prior_state = prior_next;
    Var z = draw_z(head);
    // Uncertainty trace: s sampled from the variance-encoder posterior.
    Var sigma = exp_v(head.logvar);
    auto [alpha, beta] = var_encoder_.forward(sigma);
    for (int f = 0; f < K; ++f) {
      TruncNormalParams p{alpha.value()[f], beta.value()[f]};
      double s = sample_trunc_normal(p, rngs[static_cast<size_t>(f)], cfg_.smin).s;
      result.s_traces[static_cast<size_t>(f)].push_back(s);
    }
    auto [core, pred_next] = predictor_.step(prev_feature, z, pred_state);
    pred_state = pred_next;
    Var xhat = decoder_.forward(core, held_skips, false);
    for (int f = 0; f < K; ++f) {
      Tensor frame({1, H, W});
      std::copy_n(xhat.value().data() + static_cast<int64_t>(f) * frame.numel(), frame.numel(),
                  frame.data());
      result.futures[static_cast<size_t>(f)].push_back(std::move(frame));
    }
    prev_feature = encoder_.forward(xhat, false).feature;
  }
  return result;
}

std::vector<double> NuqModel::uncertainty_trace(const Tensor& video, int context_frames) {
  if (video.ndim() != 4 || video.dim(1) != 1)
    throw ShapeError("uncertainty_trace: expected [T,1,H,W], got " + video.shape_str());
  int T = video.dim(0);
  if (context_frames < 1 || context_frames >= T)
    throw ConfigError("uncertainty_trace: need 1 <= F < T");
  NoGradGuard no_grad;

  std::vector<Var> features;
  for (int t = 0; t < T; ++t) {
    Tensor f({1, 1, video.dim(2), video.dim(3)});
    std::copy_n(video.data() + static_cast<int64_t>(t) * f.numel(), f.numel(), f.data());
    features.push_back(encoder_.forward(constant(f), false).feature);
  }
  LstmState prior_state = prior_.initial_state(1);
  std::vector<double> trace;
  for (int t = 1; t < T; ++t) {
    auto [head, next] = prior_.step(features[static_cast<size_t>(t - 1)], prior_state);
    prior_state = next;
    if (t < context_frames) continue;
    auto [alpha, beta] = var_encoder_.forward(exp_v(head.logvar));
    TruncNormalParams p{alpha.value()[0], beta.value()[0]};
    trace.push_back(trunc_normal_moments(p, cfg_.smin).mean);
  }
  return trace;
}

}  // namespace nuq
