#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nuq/distributions.hpp"
#include "nuq/nn.hpp"
#include "nuq/smm_data.hpp"

namespace nuq {

struct ModelConfig {
  int canvas = 48;
  int levels = 4;        // stride-2 conv layers; canvas must divide by 2^levels
  int base_width = 64;   // first conv width, doubled per layer
  int g = 10;            // latent dim, also the frame feature dim
  int hidden = 256;      // LSTM hidden size; the predictor output fed to the decoder
  int var_hidden = 32;   // variance encoder hidden layer
  double smin = 1e-3;    // truncated-normal support floor
  double logvar_clamp = 10.0;
  double beta_floor = 1e-4;
  bool detach_sigma = false;  // block gradient from the variance encoder into the prior

  void validate() const;
  int final_spatial() const { return canvas >> levels; }
  int final_channels() const { return base_width << (levels - 1); }
};

struct EncoderOut {
  Var feature;             // [N, g]
  std::vector<Var> skips;  // per level, halving spatial dims
};

/// Stride-2 conv stack (4x4 kernels, pad 1) with batch norm and leaky
/// rectifier, ending in a tanh feature head.
class FrameEncoder {
 public:
  void init(const ModelConfig& cfg, Rng& rng);
  EncoderOut forward(const Var& x, bool training);
  void register_params(ParamDict& pd, const std::string& prefix) const;
  void register_buffers(BufferDict& bd, const std::string& prefix);

 private:
  std::vector<Conv2d> convs_;
  std::vector<BatchNorm2d> bns_;
  Linear head_;
  int levels_ = 0, final_spatial_ = 0, final_channels_ = 0;
};

/// Mirrored deconv stack; each stage consumes the matching encoder skip
/// (channel concat, hence doubled filter counts), sigmoid output.
class FrameDecoder {
 public:
  void init(const ModelConfig& cfg, Rng& rng);
  Var forward(const Var& core, const std::vector<Var>& skips, bool training);
  void register_params(ParamDict& pd, const std::string& prefix) const;
  void register_buffers(BufferDict& bd, const std::string& prefix);

 private:
  Linear head_;
  BatchNorm2d head_bn_;
  std::vector<ConvTranspose2d> ups_;
  std::vector<BatchNorm2d> bns_;
  int levels_ = 0, final_spatial_ = 0, final_channels_ = 0;
};

struct GaussianHead {
  Var mu, logvar;  // [N, g]; logvar already clamped
};

/// Single-layer recurrent Gaussian parameter network (used for both the
/// learned prior and the variational posterior; they differ only in input).
class GaussianLstm {
 public:
  void init(int g, int hidden, double logvar_clamp, Rng& rng);
  std::pair<GaussianHead, LstmState> step(const Var& feature, const LstmState& state) const;
  LstmState initial_state(int batch) const { return LstmState::zeros(batch, hidden_); }
  void register_params(ParamDict& pd, const std::string& prefix) const;

 private:
  Linear embed_;
  LstmCell cell_;
  Linear mu_head_, logvar_head_;
  int hidden_ = 0;
  double logvar_clamp_ = 10.0;
};

/// Two-layer frame predictor; consumes [feature(x_{t-1}); z_t].
class Predictor {
 public:
  struct State {
    LstmState l1, l2;
  };

  void init(int g, int hidden, Rng& rng);
  std::pair<Var, State> step(const Var& feature, const Var& z, const State& state) const;
  State initial_state(int batch) const;
  void register_params(ParamDict& pd, const std::string& prefix) const;

 private:
  Linear embed_;
  LstmCell cell1_, cell2_;
  Linear out_;
  int hidden_ = 0;
};

/// 2-layer perceptron mapping the prior variance diagonal to the truncated
/// normal sufficient statistics (alpha >= 0 via softplus, beta > 0 via
/// softplus plus a floor).
class VarianceEncoder {
 public:
  void init(int g, int var_hidden, double beta_floor, Rng& rng);
  std::pair<Var, Var> forward(const Var& sigma_diag) const;  // (alpha [N], beta [N])
  void register_params(ParamDict& pd, const std::string& prefix) const;

 private:
  Linear l1_, l2_;
  double beta_floor_ = 1e-4;
};

enum class Variant { kNuq, kFixedPrecision };
Variant variant_from_string(const std::string& s);
const char* variant_name(Variant v);

/// Frozen stochastic draws of one training rollout. Captured on the first
/// pass and replayed for finite-difference checks (fixed eps, fixed
/// acceptance).
struct NoiseTrace {
  bool replay = false;
  std::vector<Tensor> eps_z;  // draw order: warm-up then predicted steps, [B,g]
  std::vector<Tensor> eps_s;  // predicted steps only, [B]
  size_t cursor_z = 0, cursor_s = 0;

  void rewind() {
    cursor_z = 0;
    cursor_s = 0;
  }
};

struct RolloutStep {
  Var xhat;                            // [B,1,H,W]
  Var prior_mu, prior_logvar;          // [B,g]
  Var post_mu, post_logvar;            // [B,g]
  Var z;                               // [B,g]
  Var alpha, beta, s, b;               // [B]; undefined in the fixed-precision variant
};

struct TrainRollout {
  int context_frames = 0;
  double smin = kDefaultSMin;
  Variant variant = Variant::kNuq;
  std::vector<RolloutStep> steps;  // one per predicted frame
  std::vector<Tensor> targets;     // ground truth per predicted frame, [B,1,H,W]

  // Final recurrent states (graph handles).
  LstmState prior_state, post_state;
  Predictor::State predictor_state;
};

struct GenResult {
  // futures[f][t]: generated frame [1,H,W] for future f, step t.
  std::vector<std::vector<Tensor>> futures;
  // s_traces[f][t]: sampled latent scale per step (the uncertainty trace).
  std::vector<std::vector<double>> s_traces;
};

class NuqModel {
 public:
  explicit NuqModel(const ModelConfig& cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  // Spec-level building blocks (also unit-test surface).
  EncoderOut encode_frame(const Var& x, bool training) { return encoder_.forward(x, training); }
  Var decode_frame(const Var& core, const std::vector<Var>& skips, bool training) {
    return decoder_.forward(core, skips, training);
  }
  std::pair<GaussianHead, LstmState> prior_step(const Var& prev_feature, const LstmState& st) {
    return prior_.step(prev_feature, st);
  }
  std::pair<GaussianHead, LstmState> posterior_step(const Var& cur_feature, const LstmState& st) {
    return posterior_.step(cur_feature, st);
  }
  std::pair<Var, Predictor::State> predictor_step(const Var& prev_feature, const Var& z,
                                                  const Predictor::State& st) {
    return predictor_.step(prev_feature, z, st);
  }
  std::pair<Var, Var> variance_encode(const Var& sigma_diag) {
    return var_encoder_.forward(sigma_diag);
  }
  LstmState prior_initial_state(int batch) const { return prior_.initial_state(batch); }
  LstmState posterior_initial_state(int batch) const { return posterior_.initial_state(batch); }
  Predictor::State predictor_initial_state(int batch) const {
    return predictor_.initial_state(batch);
  }

  /// Teacher-forced training rollout: warm-up over the context, posterior z,
  /// hierarchical s/b sampling (NUQ variant), skips held at the last context
  /// frame. Deterministic given seed.
  TrainRollout rollout_train(const Tensor& frames, int context_frames, uint64_t seed,
                             Variant variant, bool training = true, NoiseTrace* trace = nullptr);

  /// Autoregressive generation from F context frames; prior-driven z, the
  /// posterior is discarded. Futures run on independent seed streams, so the
  /// candidate sets for different num_futures are nested.
  GenResult rollout_generate(const Tensor& context, int steps, int num_futures, uint64_t seed);

  /// Deterministic per-step expected latent scale conditioned on the real
  /// frames (prior network only); used for the bounce-correlation analysis.
  std::vector<double> uncertainty_trace(const Tensor& video, int context_frames);

  ParamDict& params() { return params_; }
  BufferDict& buffers() { return buffers_; }
  std::vector<Var> parameter_vars() const;
  std::vector<Var> group_vars(const std::string& group) const;  // theta|phi|psi|lambda

 private:
  ModelConfig cfg_;
  FrameEncoder encoder_;
  FrameDecoder decoder_;
  Predictor predictor_;
  GaussianLstm prior_, posterior_;
  VarianceEncoder var_encoder_;
  ParamDict params_;
  BufferDict buffers_;
};

}  // namespace nuq
