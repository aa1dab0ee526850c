#include "nuq/discriminator.hpp"

#include "nuq/errors.hpp"

namespace nuq {

void DiscConfig::validate() const {
  if (k < 1) throw ConfigError("DiscConfig.k must be >= 1");
  if (canvas % (1 << levels) != 0)
    throw ConfigError("DiscConfig.canvas not divisible by 2^levels");
  if (base_width < 1 || feat < 1 || hidden < 1)
    throw ConfigError("DiscConfig widths must be >= 1");
}

SeqDiscriminator::SeqDiscriminator(const DiscConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, {0xD15C}));
  ModelConfig enc_cfg;
  enc_cfg.canvas = cfg.canvas;
  enc_cfg.levels = cfg.levels;
  enc_cfg.base_width = cfg.base_width;
  enc_cfg.g = cfg.feat;
  enc_cfg.hidden = cfg.hidden;
  encoder_.init(enc_cfg, rng);
  embed_.init(cfg.feat, cfg.hidden, rng);
  lstm_.init(cfg.hidden, cfg.hidden, rng);
  head_.init(cfg.hidden, 1, rng);

  encoder_.register_params(params_, "disc/encoder");
  embed_.register_params(params_, "disc/embed");
  lstm_.register_params(params_, "disc/lstm");
  head_.register_params(params_, "disc/head");
  encoder_.register_buffers(buffers_, "disc/encoder");
}

Var SeqDiscriminator::score_frames(const std::vector<Var>& frames, bool training) {
  if (static_cast<int>(frames.size()) != cfg_.k)
    throw ShapeError("SeqDiscriminator: expected " + std::to_string(cfg_.k) + " frames, got " +
                     std::to_string(frames.size()));
  int batch = frames[0].value().dim(0);
  LstmState state = LstmState::zeros(batch, cfg_.hidden);
  for (const Var& frame : frames) {
    EncoderOut enc = encoder_.forward(frame, training);
    state = lstm_.forward(embed_.forward(enc.feature), state);
  }
  return reshape(sigmoid(head_.forward(state.h)), {batch});
}

double SeqDiscriminator::disc_score(const FrameWindow& window) {
  if (window.frames.dim(0) != cfg_.k)
    throw ShapeError("disc_score: window has " + std::to_string(window.frames.dim(0)) +
                     " frames, expected k=" + std::to_string(cfg_.k));
  NoGradGuard no_grad;
  int h = window.frames.dim(2), w = window.frames.dim(3);
  std::vector<Var> frames;
  int64_t plane = static_cast<int64_t>(h) * w;
  for (int t = 0; t < cfg_.k; ++t) {
    Tensor f({1, 1, h, w});
    std::copy_n(window.frames.data() + t * plane, plane, f.data());
    frames.push_back(constant(std::move(f)));
  }
  return score_frames(frames, /*training=*/false).value()[0];
}

std::vector<Var> SeqDiscriminator::parameter_vars() const {
  std::vector<Var> vars;
  for (const auto& [name, v] : params_.items) vars.push_back(v);
  return vars;
}

std::vector<FrameWindow> sample_real_windows(const VideoBatch& batch, int k, uint64_t seed) {
  int total = batch.total_len();
  if (total < k)
    throw ConfigError("sample_real_windows: sequence length " + std::to_string(total) +
                      " shorter than window k=" + std::to_string(k));
  Rng rng(derive_seed(seed, {0x3EA1}));
  int h = batch.frames.dim(3), w = batch.frames.dim(4);
  int64_t plane = static_cast<int64_t>(h) * w;
  std::vector<FrameWindow> windows;
  for (int b = 0; b < batch.batch_size(); ++b) {
    int start = total == k ? 0 : static_cast<int>(rng.next_below(static_cast<uint64_t>(total - k + 1)));
    FrameWindow window;
    window.real = true;
    window.start = start;
    window.frames = Tensor({k, 1, h, w});
    for (int t = 0; t < k; ++t) {
      const double* src =
          batch.frames.data() + (static_cast<int64_t>(b) * total + start + t) * plane;
      std::copy_n(src, plane, window.frames.data() + static_cast<int64_t>(t) * plane);
    }
    windows.push_back(std::move(window));
  }
  return windows;
}

std::vector<Var> windows_to_frames(const std::vector<FrameWindow>& windows) {
  if (windows.empty()) throw ConfigError("windows_to_frames: empty window set");
  int k = windows[0].frames.dim(0);
  int h = windows[0].frames.dim(2), w = windows[0].frames.dim(3);
  int batch = static_cast<int>(windows.size());
  int64_t plane = static_cast<int64_t>(h) * w;
  std::vector<Var> frames;
  for (int t = 0; t < k; ++t) {
    Tensor f({batch, 1, h, w});
    for (int b = 0; b < batch; ++b) {
      std::copy_n(windows[static_cast<size_t>(b)].frames.data() + t * plane, plane,
                  f.data() + static_cast<int64_t>(b) * plane);
    }
    frames.push_back(constant(std::move(f)));
  }
  return frames;
}

GanLossResult gan_losses(const Var& real_scores, const Var& fake_scores) {
  if (!real_scores.defined() || !fake_scores.defined() || real_scores.value().numel() == 0 ||
      fake_scores.value().numel() == 0)
    throw ConfigError("gan_losses: empty score set");
  constexpr double kEps = 1e-7;
  Var real = clamp(real_scores, kEps, 1.0 - kEps);
  Var fake = clamp(fake_scores, kEps, 1.0 - kEps);
  Var real_term = neg(mean_all(log_v(real)));
  Var fake_term = neg(mean_all(log_v(sub(constant(Tensor(fake.value().shape(), 1.0)), fake))));
  GanLossResult res;
  res.disc_loss = add(real_term, fake_term);
  res.gen_term = fake_term;
  res.disc_loss_value = res.disc_loss.value()[0];
  res.real_score_mean = real_scores.value().sum() / real_scores.value().numel();
  res.fake_score_mean = fake_scores.value().sum() / fake_scores.value().numel();
  return res;
}

}  // namespace nuq
