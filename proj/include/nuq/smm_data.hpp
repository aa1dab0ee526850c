#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nuq/rng.hpp"
#include "nuq/tensor.hpp"

namespace nuq {

struct SynthConfig {
  int num_videos = 100;
  int seq_len = 15;      // T
  int canvas = 48;       // square canvas side in pixels
  int digit_size = 28;   // glyph side in pixels
  int num_digits = 1;
  double speed = 3.0;    // pixels per frame, preserved across bounces
  std::string digit_source;  // empty = built-in procedural glyphs, else a PGM directory
  uint64_t seed = 1;
  std::string split = "train";

  void validate() const;
};

enum class Wall : int { kLeft = 0, kRight = 1, kTop = 2, kBottom = 3 };
const char* wall_name(Wall w);
Wall wall_from_name(const std::string& name);

struct BounceEvent {
  int frame = 0;  // frame index at which the new direction takes effect
  Wall wall = Wall::kLeft;
  double dir_x = 0.0, dir_y = 0.0;  // outgoing unit direction
};

struct BounceLog {
  std::vector<std::vector<BounceEvent>> per_video;

  size_t total_events() const;
};

struct VideoDataset {
  std::vector<Tensor> videos;  // each [T, 1, H, W], pixels in [0,1]
  int seq_len = 0;             // T
  int height = 0, width = 0;
  uint64_t seed = 0;
  std::string split = "train";
  std::optional<BounceLog> bounces;

  int num_videos() const { return static_cast<int>(videos.size()); }
};

/// Renders bouncing digits with stochastic post-bounce directions: straight
/// lines at constant speed between wall contacts, a fresh uniform draw from
/// the outward hemisphere at each contact (speed preserved), and a quadrant
/// draw when both walls are hit in the same step (x reflected before y).
std::pair<VideoDataset, BounceLog> synthesize_smmnist(const SynthConfig& cfg);

/// Directory layout: manifest.txt (num_videos, T, H, W, seed, split) +
/// video_%05d/frame_%04d.pgm + optional bounces.csv.
void save_dataset(const VideoDataset& ds, const std::string& dir);
VideoDataset load_dataset(const std::string& dir);

struct VideoBatch {
  Tensor frames;  // [B, total_len, 1, H, W]
  int context_frames = 0;  // F: frames 1..F are context, F+1..total_len targets
  std::vector<int> video_ids;
  std::vector<int> window_starts;

  int batch_size() const { return static_cast<int>(video_ids.size()); }
  int total_len() const { return frames.dim(1); }
};

/// One epoch over a dataset: a seeded permutation of videos, one random
/// contiguous window per video, fixed-size batches with the final partial
/// batch emitted. Single-consumer.
class BatchIterator {
 public:
  BatchIterator(const VideoDataset& ds, int batch_size, int context_frames, int total_len,
                uint64_t seed);

  std::optional<VideoBatch> next();
  int num_batches() const;

 private:
  const VideoDataset& ds_;
  int batch_size_, context_frames_, total_len_;
  std::vector<int> order_;
  std::vector<int> window_starts_;
  size_t cursor_ = 0;
};

BatchIterator batch_iter(const VideoDataset& ds, int batch_size, int context_frames, int total_len,
                         uint64_t seed);

/// One digit's kinematic state; positions are the glyph's top-left corner in
/// [0, canvas - digit_size] per axis.
struct DigitState {
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  int glyph = 0;
};

/// Advances one frame within a [0, range_max]^2 box. On wall contact the
/// position reflects, a fresh outgoing direction is drawn (hemisphere for one
/// wall, inward quadrant for a corner, x reflected before y) and one event is
/// appended with the given frame index.
void step_digit(DigitState& d, double range_max, double speed, int frame, Rng& rng,
                std::vector<BounceEvent>& events);

/// Procedural glyph atlas (anti-aliased disc / ring / bar shapes) so the
/// generator has no external data dependency. `index` choices repeat cyclically.
Tensor make_glyph(int index, int size);
/// Loads glyphs from a directory of PGM files (sorted by filename).
std::vector<Tensor> load_glyphs(const std::string& dir, int size);

}  // namespace nuq
