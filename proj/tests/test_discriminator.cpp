#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nuq/discriminator.hpp"
#include "nuq/errors.hpp"
#include "nuq/losses.hpp"
#include "nuq/smm_data.hpp"
#include "oracles.hpp"

using namespace nuq;

namespace {

DiscConfig tiny_disc(int k = 3) {
  DiscConfig cfg;
  cfg.canvas = 16;
  cfg.levels = 2;
  cfg.base_width = 4;
  cfg.feat = 8;
  cfg.hidden = 16;
  cfg.k = k;
  return cfg;
}

FrameWindow random_window(int k, int side, uint64_t seed, bool real = true) {
  Rng rng(seed);
  FrameWindow w;
  w.real = real;
  w.frames = Tensor({k, 1, side, side});
  for (int64_t i = 0; i < w.frames.numel(); ++i) w.frames[i] = rng.uniform();
  return w;
}

VideoBatch synth_batch(int b, int len, int side, uint64_t seed) {
  Rng rng(seed);
  VideoBatch batch;
  batch.context_frames = 2;
  batch.frames = Tensor({b, len, 1, side, side});
  for (int64_t i = 0; i < batch.frames.numel(); ++i) batch.frames[i] = rng.uniform();
  for (int i = 0; i < b; ++i) {
    batch.video_ids.push_back(i);
    batch.window_starts.push_back(0);
  }
  return batch;
}

}  // namespace

TEST_CASE("untrained discriminator scores lie strictly in (0,1)") {
  SeqDiscriminator disc(tiny_disc(), 1);
  for (uint64_t s = 0; s < 5; ++s) {
    double score = disc.disc_score(random_window(3, 16, s));
    CHECK(score > 0.0);
    CHECK(score < 1.0);
  }
}

TEST_CASE("frame order changes the score (recurrent read)") {
  SeqDiscriminator disc(tiny_disc(), 2);
  FrameWindow w = random_window(3, 16, 7);
  FrameWindow permuted = w;
  // Swap frames 0 and 2.
  int64_t plane = 16 * 16;
  for (int64_t i = 0; i < plane; ++i)
    std::swap(permuted.frames[i], permuted.frames[2 * plane + i]);
  CHECK(disc.disc_score(w) != disc.disc_score(permuted));
}

TEST_CASE("batched scoring equals per-window scoring") {
  SeqDiscriminator disc(tiny_disc(), 3);
  std::vector<FrameWindow> windows;
  for (uint64_t s = 0; s < 4; ++s) windows.push_back(random_window(3, 16, 100 + s));
  NoGradGuard no_grad;
  Var batched = disc.score_frames(windows_to_frames(windows), /*training=*/false);
  for (size_t i = 0; i < windows.size(); ++i) {
    double single = disc.disc_score(windows[i]);
    CHECK(std::abs(batched.value()[static_cast<int64_t>(i)] - single) < 1e-6);
  }
}

TEST_CASE("wrong window length is a shape error") {
  SeqDiscriminator disc(tiny_disc(3), 4);
  CHECK_THROWS_AS(disc.disc_score(random_window(4, 16, 9)), ShapeError);
}

TEST_CASE("real windows sample uniform start indices") {
  VideoBatch batch = synth_batch(1, 20, 16, 11);
  // T == k forces start 0.
  VideoBatch batch3 = synth_batch(1, 3, 16, 12);
  auto forced = sample_real_windows(batch3, 3, 5);
  CHECK(forced[0].start == 0);
  CHECK(forced[0].real);

  std::vector<int64_t> counts(18, 0);
  for (uint64_t s = 0; s < 10000; ++s) {
    auto ws = sample_real_windows(batch, 3, s);
    counts[static_cast<size_t>(ws[0].start)]++;
  }
  double stat = oracles::chi_square_uniform(counts);
  CHECK(stat < oracles::chi2_crit_1pct(17));

  CHECK_THROWS_AS(sample_real_windows(batch3, 5, 1), ConfigError);
}

TEST_CASE("window content matches the source video slice") {
  VideoBatch batch = synth_batch(2, 10, 16, 13);
  auto ws = sample_real_windows(batch, 3, 77);
  REQUIRE(ws.size() == 2);
  int64_t plane = 16 * 16;
  for (int b = 0; b < 2; ++b) {
    int start = ws[static_cast<size_t>(b)].start;
    for (int t = 0; t < 3; ++t)
      for (int64_t i = 0; i < plane; ++i)
        CHECK(ws[static_cast<size_t>(b)].frames[t * plane + i] ==
              batch.frames[(static_cast<int64_t>(b) * 10 + start + t) * plane + i]);
  }
}

TEST_CASE("gan loss hand values") {
  Var half = constant(Tensor({4}, 0.5));
  GanLossResult res = gan_losses(half, half);
  CHECK(res.disc_loss_value == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  Var real_perfect = constant(Tensor({4}, 1.0 - 1e-7));
  Var fake_perfect = constant(Tensor({4}, 1e-7));
  GanLossResult perfect = gan_losses(real_perfect, fake_perfect);
  CHECK(perfect.disc_loss_value < 1e-5);

  CHECK_THROWS_AS(gan_losses(Var(), half), std::exception);
}

TEST_CASE("discriminator loss is non-negative for any score vectors") {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor r({5}), f({5});
    for (int i = 0; i < 5; ++i) {
      r[i] = rng.uniform_open();
      f[i] = rng.uniform_open();
    }
    GanLossResult res = gan_losses(constant(r), constant(f));
    CHECK(res.disc_loss_value >= 0.0);
  }
}

TEST_CASE("alternating updates touch disjoint parameter sets") {
  ModelConfig mcfg;
  mcfg.canvas = 16;
  mcfg.levels = 2;
  mcfg.base_width = 4;
  mcfg.g = 4;
  mcfg.hidden = 16;
  mcfg.var_hidden = 8;
  NuqModel model(mcfg, 15);
  SeqDiscriminator disc(tiny_disc(), 16);
  Adam gen_opt(model.parameter_vars(), 1e-3);
  Adam disc_opt(disc.parameter_vars(), 1e-3);

  Rng rng(17);
  Tensor frames({2, 6, 1, 16, 16});
  for (int64_t i = 0; i < frames.numel(); ++i) frames[i] = rng.uniform();
  VideoBatch batch;
  batch.frames = frames;
  batch.context_frames = 2;
  batch.video_ids = {0, 1};
  batch.window_starts = {0, 0};

  HyperpriorConfig hyper;
  TrainRollout rollout = model.rollout_train(frames, 2, 18, Variant::kNuq);
  LossResult loss = nuq_loss(rollout, 0.1, 0.01, hyper);
  auto real = sample_real_windows(batch, 3, 19);
  std::vector<Var> fakes{rollout.steps[0].xhat, rollout.steps[1].xhat, rollout.steps[2].xhat};
  GanLossResult gl = gan_losses(disc.score_frames(windows_to_frames(real), true),
                                disc.score_frames(fakes, true));
  Var objective = sub(loss.total, mul_scalar(gl.disc_loss, 1e-5));

  uint64_t disc_hash_before = hash_params(disc.parameter_vars());
  uint64_t gen_hash_before = hash_params(model.parameter_vars());
  gen_opt.zero_grad();
  disc_opt.zero_grad();
  backward(objective);
  gen_opt.step();
  CHECK(hash_params(disc.parameter_vars()) == disc_hash_before);   // w untouched
  CHECK(hash_params(model.parameter_vars()) != gen_hash_before);   // generator moved

  // Discriminator step on detached fakes.
  uint64_t gen_hash_mid = hash_params(model.parameter_vars());
  std::vector<Var> detached;
  for (const Var& f : fakes) detached.push_back(constant(f.value()));
  GanLossResult gl2 = gan_losses(disc.score_frames(windows_to_frames(real), true),
                                 disc.score_frames(detached, true));
  disc_opt.zero_grad();
  gen_opt.zero_grad();
  backward(gl2.disc_loss);
  disc_opt.step();
  CHECK(hash_params(model.parameter_vars()) == gen_hash_mid);          // generator untouched
  CHECK(hash_params(disc.parameter_vars()) != disc_hash_before);       // w moved
}

TEST_CASE("discriminator separates digits from noise within a few steps") {
  DiscConfig cfg = tiny_disc();
  SeqDiscriminator disc(cfg, 20);
  Adam opt(disc.parameter_vars(), 2e-3);

  SynthConfig synth;
  synth.num_videos = 8;
  synth.seq_len = 6;
  synth.canvas = 16;
  synth.digit_size = 8;
  synth.speed = 2.0;
  synth.seed = 21;
  auto [ds, log] = synthesize_smmnist(synth);

  Rng noise_rng(22);
  double first_loss = -1.0, last_loss = -1.0;
  for (int step = 0; step < 150; ++step) {
    VideoBatch batch;
    batch.frames = Tensor({4, 6, 1, 16, 16});
    for (int b = 0; b < 4; ++b) {
      const Tensor& video = ds.videos[static_cast<size_t>((step + b) % 8)];
      std::copy_n(video.data(), video.numel(),
                  batch.frames.data() + static_cast<int64_t>(b) * video.numel());
      batch.video_ids.push_back(b);
      batch.window_starts.push_back(0);
    }
    batch.context_frames = 2;
    auto real = sample_real_windows(batch, 3, 1000 + static_cast<uint64_t>(step));
    std::vector<FrameWindow> fake;
    for (int b = 0; b < 4; ++b) {
      FrameWindow w;
      w.real = false;
      w.frames = Tensor({3, 1, 16, 16});
      for (int64_t i = 0; i < w.frames.numel(); ++i) w.frames[i] = noise_rng.uniform();
      fake.push_back(std::move(w));
    }
    GanLossResult gl = gan_losses(disc.score_frames(windows_to_frames(real), true),
                                  disc.score_frames(windows_to_frames(fake), true));
    if (step == 0) first_loss = gl.disc_loss_value;
    last_loss = gl.disc_loss_value;
    opt.zero_grad();
    backward(gl.disc_loss);
    opt.step();
  }
  CHECK(last_loss < first_loss);
  CHECK(last_loss < 0.6);
}
