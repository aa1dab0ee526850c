#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nuq/errors.hpp"
#include "nuq/image_io.hpp"
#include "nuq/smm_data.hpp"
#include "oracles.hpp"

using namespace nuq;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("nuq_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Brightness centroid of a [1,H,W] frame slice of a video tensor.
std::pair<double, double> centroid(const Tensor& video, int t) {
  int h = video.dim(2), w = video.dim(3);
  double sx = 0.0, sy = 0.0, mass = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = video.at(t, 0, y, x);
      sx += v * x;
      sy += v * y;
      mass += v;
    }
  return {sx / mass, sy / mass};
}

}  // namespace

TEST_CASE("hand-stepped digit moves linearly with no wall contact") {
  DigitState d{5.0, 5.0, 1.0, 1.0, 0};
  Rng rng(1);
  std::vector<BounceEvent> events;
  for (int t = 1; t <= 3; ++t) step_digit(d, 20.0, std::sqrt(2.0), t, rng, events);
  CHECK(events.empty());
  CHECK(d.x == doctest::Approx(8.0));
  CHECK(d.y == doctest::Approx(8.0));
}

TEST_CASE("digit adjacent to the right wall moving right bounces at frame 1") {
  DigitState d{20.0, 10.0, 3.0, 0.0, 0};
  Rng rng(2);
  std::vector<BounceEvent> events;
  step_digit(d, 20.0, 3.0, 1, rng, events);
  REQUIRE(events.size() == 1);
  CHECK(events[0].frame == 1);
  CHECK(events[0].wall == Wall::kRight);
  CHECK(events[0].dir_x < 0.0);
  CHECK(d.x <= 20.0);
  // Position reflected off the wall: 2*20 - 23 = 17.
  CHECK(d.x == doctest::Approx(17.0));
}

TEST_CASE("corner contact draws from the inward quadrant") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    DigitState d{19.5, 19.5, 3.0, 3.0, 0};
    Rng rng(seed);
    std::vector<BounceEvent> events;
    step_digit(d, 20.0, std::sqrt(18.0), 1, rng, events);
    REQUIRE(events.size() == 1);
    CHECK(events[0].dir_x < 0.0);
    CHECK(events[0].dir_y < 0.0);
    CHECK(d.x <= 20.0);
    CHECK(d.y <= 20.0);
  }
}

TEST_CASE("synthesized frames stay in range and are non-empty") {
  SynthConfig cfg;
  cfg.num_videos = 4;
  cfg.seq_len = 12;
  cfg.canvas = 32;
  cfg.digit_size = 14;
  cfg.speed = 3.0;
  cfg.seed = 11;
  auto [ds, log] = synthesize_smmnist(cfg);
  REQUIRE(ds.num_videos() == 4);
  for (const Tensor& video : ds.videos) {
    CHECK(video.min() >= 0.0);
    CHECK(video.max() <= 1.0);
    for (int t = 0; t < cfg.seq_len; ++t) {
      double mx = 0.0;
      for (int i = 0; i < 32 * 32; ++i)
        mx = std::max(mx, video[static_cast<int64_t>(t) * 32 * 32 + i]);
      CHECK(mx > 0.0);  // every frame contains the digit
    }
  }
}

TEST_CASE("synthesis is deterministic given the seed") {
  SynthConfig cfg;
  cfg.num_videos = 2;
  cfg.seq_len = 10;
  cfg.canvas = 32;
  cfg.digit_size = 14;
  cfg.seed = 99;
  auto [ds1, log1] = synthesize_smmnist(cfg);
  auto [ds2, log2] = synthesize_smmnist(cfg);
  CHECK(ds1.videos[0].vec() == ds2.videos[0].vec());
  CHECK(log1.total_events() == log2.total_events());
}

TEST_CASE("invalid configs are rejected with the offending field") {
  SynthConfig cfg;
  cfg.canvas = 20;
  cfg.digit_size = 28;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("canvas"), ConfigError);
  cfg = SynthConfig{};
  cfg.speed = 0.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("speed"), ConfigError);
  cfg = SynthConfig{};
  cfg.seq_len = 1;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("seq_len"), ConfigError);
}

TEST_CASE("bounce log frames are strictly increasing per video") {
  SynthConfig cfg;
  cfg.num_videos = 20;
  cfg.seq_len = 30;
  cfg.canvas = 28;
  cfg.digit_size = 14;
  cfg.speed = 4.0;
  cfg.seed = 5;
  auto [ds, log] = synthesize_smmnist(cfg);
  CHECK(log.total_events() > 0);
  for (const auto& events : log.per_video) {
    for (size_t i = 1; i < events.size(); ++i) CHECK(events[i].frame > events[i - 1].frame);
    for (const auto& e : events) {
      double norm = std::hypot(e.dir_x, e.dir_y);
      CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
      // Direction points away from the recorded wall.
      switch (e.wall) {
        case Wall::kLeft: CHECK(e.dir_x > 0.0); break;
        case Wall::kRight: CHECK(e.dir_x < 0.0); break;
        case Wall::kTop: CHECK(e.dir_y > 0.0); break;
        case Wall::kBottom: CHECK(e.dir_y < 0.0); break;
      }
    }
  }
}

TEST_CASE("centroid trajectories are affine between bounces") {
  SynthConfig cfg;
  cfg.num_videos = 6;
  cfg.seq_len = 20;
  cfg.canvas = 48;
  cfg.digit_size = 20;
  cfg.speed = 2.0;
  cfg.seed = 17;
  auto [ds, log] = synthesize_smmnist(cfg);
  for (int v = 0; v < ds.num_videos(); ++v) {
    const auto& events = log.per_video[static_cast<size_t>(v)];
    std::vector<int> boundaries{0};
    for (const auto& e : events) boundaries.push_back(e.frame);
    boundaries.push_back(cfg.seq_len);
    for (size_t b = 0; b + 1 < boundaries.size(); ++b) {
      int t0 = boundaries[b], t1 = boundaries[b + 1] - 1;
      if (t1 - t0 < 2) continue;
      auto [x0, y0] = centroid(ds.videos[static_cast<size_t>(v)], t0);
      auto [x1, y1] = centroid(ds.videos[static_cast<size_t>(v)], t1);
      for (int t = t0; t <= t1; ++t) {
        double alpha = static_cast<double>(t - t0) / (t1 - t0);
        auto [cx, cy] = centroid(ds.videos[static_cast<size_t>(v)], t);
        // Rendering rounds positions to integers; the glyph is symmetric so
        // the centroid tracks the rounded position to within a pixel.
        CHECK(std::abs(cx - (x0 + alpha * (x1 - x0))) < 1.0);
        CHECK(std::abs(cy - (y0 + alpha * (y1 - y0))) < 1.0);
      }
    }
  }
}

TEST_CASE("outgoing bounce angles are uniform over the outward hemisphere") {
  DigitState d{5.0, 5.0, 3.0, 1.5, 0};
  Rng rng(31415);
  std::vector<BounceEvent> events;
  for (int t = 1; events.size() < 12000; ++t) step_digit(d, 10.0, 3.354, t, rng, events);

  // Bin the angle relative to each wall's inward normal into 8 bins.
  std::vector<std::vector<int64_t>> counts(4, std::vector<int64_t>(8, 0));
  for (const auto& e : events) {
    double nx = 0.0, ny = 0.0;
    switch (e.wall) {
      case Wall::kLeft: nx = 1.0; break;
      case Wall::kRight: nx = -1.0; break;
      case Wall::kTop: ny = 1.0; break;
      case Wall::kBottom: ny = -1.0; break;
    }
    double along = e.dir_x * nx + e.dir_y * ny;               // cos(phi)
    double cross = e.dir_x * (-ny) + e.dir_y * nx;            // sin(phi)
    double phi = std::atan2(cross, along);                    // in (-pi/2, pi/2)
    int bin = std::min(7, static_cast<int>((phi + M_PI / 2) / (M_PI / 8)));
    counts[static_cast<size_t>(static_cast<int>(e.wall))][static_cast<size_t>(bin)]++;
  }
  for (int wall = 0; wall < 4; ++wall) {
    int64_t total = 0;
    for (int64_t c : counts[static_cast<size_t>(wall)]) total += c;
    REQUIRE(total > 1000);
    double stat = oracles::chi_square_uniform(counts[static_cast<size_t>(wall)]);
    CHECK(stat < oracles::chi2_crit_1pct(7));
  }
}

TEST_CASE("save/load round-trips quantized pixels exactly") {
  SynthConfig cfg;
  cfg.num_videos = 3;
  cfg.seq_len = 6;
  cfg.canvas = 24;
  cfg.digit_size = 12;
  cfg.seed = 7;
  auto [ds, log] = synthesize_smmnist(cfg);
  fs::path dir = temp_dir("roundtrip");
  save_dataset(ds, dir.string());
  VideoDataset back = load_dataset(dir.string());
  REQUIRE(back.num_videos() == 3);
  CHECK(back.seq_len == 6);
  CHECK(back.height == 24);
  REQUIRE(back.bounces.has_value());
  CHECK(back.bounces->total_events() == log.total_events());
  for (int v = 0; v < 3; ++v) {
    const Tensor& orig = ds.videos[static_cast<size_t>(v)];
    const Tensor& got = back.videos[static_cast<size_t>(v)];
    REQUIRE(got.same_shape(orig));
    for (int64_t i = 0; i < orig.numel(); ++i)
      CHECK(got[i] == quantize_pixel(orig[i]) / 255.0);
  }
  // Saving the loaded dataset reproduces identical pixels (8-bit fixed point).
  fs::path dir2 = temp_dir("roundtrip2");
  save_dataset(back, dir2.string());
  VideoDataset back2 = load_dataset(dir2.string());
  for (int v = 0; v < 3; ++v)
    CHECK(back2.videos[static_cast<size_t>(v)].vec() == back.videos[static_cast<size_t>(v)].vec());
}

TEST_CASE("manifest video-count mismatch is a format error naming the path") {
  SynthConfig cfg;
  cfg.num_videos = 4;
  cfg.seq_len = 4;
  cfg.canvas = 24;
  cfg.digit_size = 12;
  auto [ds, log] = synthesize_smmnist(cfg);
  fs::path dir = temp_dir("mismatch");
  save_dataset(ds, dir.string());
  fs::remove_all(dir / "video_00003");
  CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("video_00003"), FormatError);

  std::ofstream(dir / "manifest.txt") << "num_videos=3\nT=4\nH=24\nW=24\nseed=1\nsplit=train\n";
  // The stale bounce rows for the removed video are inconsistent too.
  CHECK_THROWS_AS(load_dataset(dir.string()), FormatError);
  fs::remove(dir / "bounces.csv");
  VideoDataset ok = load_dataset(dir.string());
  CHECK(ok.num_videos() == 3);
  CHECK_FALSE(ok.bounces.has_value());
}

TEST_CASE("frame sizes come from the manifest, not assumptions") {
  SynthConfig cfg;
  cfg.num_videos = 1;
  cfg.seq_len = 3;
  cfg.canvas = 40;  // non-default canvas
  cfg.digit_size = 16;
  auto [ds, log] = synthesize_smmnist(cfg);
  fs::path dir = temp_dir("canvas40");
  save_dataset(ds, dir.string());
  VideoDataset back = load_dataset(dir.string());
  CHECK(back.height == 40);
  CHECK(back.width == 40);
}

TEST_CASE("batch_iter emits 4,4,2 for 10 videos with batch 4") {
  SynthConfig cfg;
  cfg.num_videos = 10;
  cfg.seq_len = 8;
  cfg.canvas = 24;
  cfg.digit_size = 12;
  auto [ds, log] = synthesize_smmnist(cfg);
  BatchIterator it = batch_iter(ds, 4, 2, 6, 42);
  std::vector<int> sizes;
  while (auto b = it.next()) {
    sizes.push_back(b->batch_size());
    CHECK(b->context_frames == 2);
    CHECK(b->total_len() == 6);
    for (int t0 : b->window_starts) {
      CHECK(t0 >= 0);
      CHECK(t0 <= 2);
    }
  }
  CHECK(sizes == std::vector<int>{4, 4, 2});
}

TEST_CASE("batch_iter is deterministic given the seed") {
  SynthConfig cfg;
  cfg.num_videos = 8;
  cfg.seq_len = 8;
  cfg.canvas = 24;
  cfg.digit_size = 12;
  auto [ds, log] = synthesize_smmnist(cfg);
  std::vector<int> order1, order2, order3;
  BatchIterator a = batch_iter(ds, 3, 2, 8, 7);
  while (auto b = a.next())
    for (int v : b->video_ids) order1.push_back(v);
  BatchIterator c = batch_iter(ds, 3, 2, 8, 7);
  while (auto b = c.next())
    for (int v : b->video_ids) order2.push_back(v);
  BatchIterator d = batch_iter(ds, 3, 2, 8, 8);
  while (auto b = d.next())
    for (int v : b->video_ids) order3.push_back(v);
  CHECK(order1 == order2);
  CHECK(order1 != order3);
}

TEST_CASE("batch_iter rejects impossible windows") {
  SynthConfig cfg;
  cfg.num_videos = 2;
  cfg.seq_len = 5;
  cfg.canvas = 24;
  cfg.digit_size = 12;
  auto [ds, log] = synthesize_smmnist(cfg);
  CHECK_THROWS_AS(batch_iter(ds, 2, 2, 6, 1), ConfigError);   // total_len > T
  CHECK_THROWS_AS(batch_iter(ds, 2, 5, 5, 1), ConfigError);   // F >= total_len
}

TEST_CASE("context/target split marks the first F frames as context") {
  SynthConfig cfg;
  cfg.num_videos = 2;
  cfg.seq_len = 20;
  cfg.canvas = 24;
  cfg.digit_size = 12;
  auto [ds, log] = synthesize_smmnist(cfg);
  BatchIterator it = batch_iter(ds, 2, 5, 20, 3);
  auto b = it.next();
  REQUIRE(b.has_value());
  CHECK(b->context_frames == 5);
  CHECK(b->total_len() - b->context_frames == 15);  // prediction targets 6..20
}

TEST_CASE("procedural glyphs are renderable") {
  for (int i = 0; i < 4; ++i) {
    Tensor glyph = make_glyph(i, 16);
    CHECK(glyph.min() >= 0.0);
    CHECK(glyph.max() <= 1.0);
    CHECK(glyph.sum() > 1.0);
  }
}
