#pragma once

#include <cstdint>
#include <vector>

#include "nuq/model.hpp"
#include "nuq/nn.hpp"
#include "nuq/smm_data.hpp"

namespace nuq {

struct DiscConfig {
  int canvas = 48;
  int levels = 4;
  int base_width = 16;
  int feat = 64;    // per-frame feature fed to the recurrent read
  int hidden = 256;
  int k = 3;        // window length

  void validate() const;
};

/// k contiguous frames plus provenance.
struct FrameWindow {
  Tensor frames;  // [k, 1, H, W]
  bool real = true;
  int start = 0;
};

/// Recurrent sequence discriminator: shared per-frame conv encoder feeding a
/// single 256-d LSTM, sigmoid scalar head.
class SeqDiscriminator {
 public:
  SeqDiscriminator(const DiscConfig& cfg, uint64_t init_seed);

  const DiscConfig& config() const { return cfg_; }

  /// Scores a batch given per-time frame tensors (k entries of [B,1,H,W]).
  /// Returns [B] probabilities in (0,1).
  Var score_frames(const std::vector<Var>& frames, bool training);

  /// Convenience single-window scoring.
  double disc_score(const FrameWindow& window);

  ParamDict& params() { return params_; }
  BufferDict& buffers() { return buffers_; }
  std::vector<Var> parameter_vars() const;

 private:
  DiscConfig cfg_;
  FrameEncoder encoder_;
  Linear embed_;
  LstmCell lstm_;
  Linear head_;
  ParamDict params_;
  BufferDict buffers_;
};

/// Uniform random k-window per video in the batch; deterministic given seed.
std::vector<FrameWindow> sample_real_windows(const VideoBatch& batch, int k, uint64_t seed);

/// Stacks same-time frames of a window list into [B,1,H,W] constants.
std::vector<Var> windows_to_frames(const std::vector<FrameWindow>& windows);

struct GanLossResult {
  Var disc_loss;  // L_D = -mean log D(real) - mean log(1 - D(fake))
  Var gen_term;   // the fake half the generator pushes against
  double disc_loss_value = 0.0;
  double real_score_mean = 0.0;
  double fake_score_mean = 0.0;
};

/// Scores are clamped to [1e-7, 1-1e-7] before the logs.
GanLossResult gan_losses(const Var& real_scores, const Var& fake_scores);

}  // namespace nuq
