#include "nuq/smm_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nuq/config.hpp"
#include "nuq/errors.hpp"
#include "nuq/image_io.hpp"
#include "nuq/rng.hpp"

namespace fs = std::filesystem;

namespace nuq {

namespace {
constexpr double kPi = 3.1415926535897932384626433832795;
}

void SynthConfig::validate() const {
  if (num_videos < 1) throw ConfigError("SynthConfig.num_videos must be >= 1");
  if (seq_len < 2) throw ConfigError("SynthConfig.seq_len must be >= 2");
  if (canvas <= digit_size)
    throw ConfigError("SynthConfig.canvas must exceed digit_size (canvas=" +
                      std::to_string(canvas) + ", digit_size=" + std::to_string(digit_size) + ")");
  if (digit_size < 2) throw ConfigError("SynthConfig.digit_size must be >= 2");
  if (num_digits < 1) throw ConfigError("SynthConfig.num_digits must be >= 1");
  if (speed < 1.0) throw ConfigError("SynthConfig.speed must be >= 1");
}

const char* wall_name(Wall w) {
  switch (w) {
    case Wall::kLeft: return "left";
    case Wall::kRight: return "right";
    case Wall::kTop: return "top";
    case Wall::kBottom: return "bottom";
  }
  return "?";
}

Wall wall_from_name(const std::string& name) {
  if (name == "left") return Wall::kLeft;
  if (name == "right") return Wall::kRight;
  if (name == "top") return Wall::kTop;
  if (name == "bottom") return Wall::kBottom;
  throw FormatError("unknown wall name: " + name);
}

size_t BounceLog::total_events() const {
  size_t n = 0;
  for (const auto& v : per_video) n += v.size();
  return n;
}

Tensor make_glyph(int index, int size) {
  Tensor g({size, size});
  double c = (size - 1) / 2.0;
  auto aa = [](double d) {  // signed distance -> coverage, ~1px feather
    return std::min(std::max(0.5 - d, 0.0), 1.0);
  };
  int kind = ((index % 4) + 4) % 4;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double dx = x - c, dy = y - c;
      double r = std::sqrt(dx * dx + dy * dy);
      double v = 0.0;
      switch (kind) {
        case 0:  // filled disc
          v = aa(r - 0.38 * size);
          break;
        case 1:  // ring
          v = aa(std::abs(r - 0.34 * size) - 0.10 * size);
          break;
        case 2:  // vertical bar
          v = aa(std::abs(dx) - 0.14 * size) * aa(std::abs(dy) - 0.42 * size);
          break;
        case 3:  // horizontal bar
          v = aa(std::abs(dy) - 0.14 * size) * aa(std::abs(dx) - 0.42 * size);
          break;
      }
      g.at(y, x) = v;
    }
  }
  return g;
}

std::vector<Tensor> load_glyphs(const std::string& dir, int size) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".pgm") files.push_back(e.path().string());
  }
  if (files.empty()) throw FormatError("load_glyphs: no .pgm files in " + dir);
  std::sort(files.begin(), files.end());
  std::vector<Tensor> glyphs;
  for (const auto& f : files) {
    Tensor img = read_pgm(f);  // [1,H,W]
    int h = img.dim(1), w = img.dim(2);
    Tensor out({size, size});
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        // Nearest-neighbour rescale; glyph fidelity is not contractual.
        int sy = std::min(h - 1, static_cast<int>(static_cast<double>(y) * h / size));
        int sx = std::min(w - 1, static_cast<int>(static_cast<double>(x) * w / size));
        out.at(y, x) = img.at(0, sy, sx);
      }
    }
    glyphs.push_back(std::move(out));
  }
  return glyphs;
}

namespace {

// Uniform direction from the open hemisphere whose inward normal is `wall`'s.
void draw_hemisphere(Wall wall, double speed, Rng& rng, double& vx, double& vy) {
  double phi = rng.uniform(-kPi / 2, kPi / 2);  // relative to the inward normal
  double nx = 0.0, ny = 0.0;
  switch (wall) {
    case Wall::kLeft: nx = 1.0; ny = 0.0; break;
    case Wall::kRight: nx = -1.0; ny = 0.0; break;
    case Wall::kTop: nx = 0.0; ny = 1.0; break;
    case Wall::kBottom: nx = 0.0; ny = -1.0; break;
  }
  double cs = std::cos(phi), sn = std::sin(phi);
  // Rotate the inward normal by phi.
  vx = speed * (nx * cs - ny * sn);
  vy = speed * (nx * sn + ny * cs);
}

// Uniform direction from the open quadrant pointing inward from a corner.
void draw_quadrant(double sx, double sy, double speed, Rng& rng, double& vx, double& vy) {
  double phi = rng.uniform(0.0, kPi / 2);
  vx = sx * speed * std::cos(phi);
  vy = sy * speed * std::sin(phi);
}

void paste_glyph(Tensor& frame, const Tensor& glyph, int ox, int oy) {
  int d = glyph.dim(0);
  for (int y = 0; y < d; ++y)
    for (int x = 0; x < d; ++x)
      frame.at(0, oy + y, ox + x) = std::max(frame.at(0, oy + y, ox + x), glyph.at(y, x));
}

}  // namespace

void step_digit(DigitState& d, double range_max, double speed, int frame, Rng& rng,
                std::vector<BounceEvent>& events) {
  double M = range_max;
  double nx = d.x + d.vx;
  double ny = d.y + d.vy;
  bool hit_x = false, hit_y = false;
  Wall wx = Wall::kLeft, wy = Wall::kTop;
  // Reflect x first, then y (corner rule).
  while (nx < 0.0 || nx > M) {
    if (nx < 0.0) {
      nx = -nx;
      wx = Wall::kLeft;
    } else {
      nx = 2.0 * M - nx;
      wx = Wall::kRight;
    }
    hit_x = true;
  }
  while (ny < 0.0 || ny > M) {
    if (ny < 0.0) {
      ny = -ny;
      wy = Wall::kTop;
    } else {
      ny = 2.0 * M - ny;
      wy = Wall::kBottom;
    }
    hit_y = true;
  }
  if (hit_x && hit_y) {
    double sx = (wx == Wall::kLeft) ? 1.0 : -1.0;
    double sy = (wy == Wall::kTop) ? 1.0 : -1.0;
    draw_quadrant(sx, sy, speed, rng, d.vx, d.vy);
    events.push_back({frame, wx, d.vx / speed, d.vy / speed});
  } else if (hit_x) {
    draw_hemisphere(wx, speed, rng, d.vx, d.vy);
    events.push_back({frame, wx, d.vx / speed, d.vy / speed});
  } else if (hit_y) {
    draw_hemisphere(wy, speed, rng, d.vx, d.vy);
    events.push_back({frame, wy, d.vx / speed, d.vy / speed});
  }
  d.x = nx;
  d.y = ny;
}

std::pair<VideoDataset, BounceLog> synthesize_smmnist(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<Tensor> glyphs;
  if (cfg.digit_source.empty()) {
    for (int i = 0; i < 4; ++i) glyphs.push_back(make_glyph(i, cfg.digit_size));
  } else {
    glyphs = load_glyphs(cfg.digit_source, cfg.digit_size);
  }

  VideoDataset ds;
  ds.seq_len = cfg.seq_len;
  ds.height = cfg.canvas;
  ds.width = cfg.canvas;
  ds.seed = cfg.seed;
  ds.split = cfg.split;
  BounceLog log;
  log.per_video.resize(static_cast<size_t>(cfg.num_videos));

  double M = static_cast<double>(cfg.canvas - cfg.digit_size);  // position range per axis

  for (int v = 0; v < cfg.num_videos; ++v) {
    // Independent substream per video so synthesis parallelizes cleanly.
    Rng rng(derive_seed(cfg.seed, {1, static_cast<uint64_t>(v)}));
    Tensor video({cfg.seq_len, 1, cfg.canvas, cfg.canvas});

    std::vector<DigitState> digits(static_cast<size_t>(cfg.num_digits));
    for (auto& d : digits) {
      d.x = rng.uniform(0.0, M);
      d.y = rng.uniform(0.0, M);
      double theta = rng.uniform(0.0, 2 * kPi);
      d.vx = cfg.speed * std::cos(theta);
      d.vy = cfg.speed * std::sin(theta);
      d.glyph = static_cast<int>(rng.next_below(glyphs.size()));
    }

    for (int t = 0; t < cfg.seq_len; ++t) {
      if (t > 0) {
        for (auto& d : digits)
          step_digit(d, M, cfg.speed, t, rng, log.per_video[static_cast<size_t>(v)]);
      }
      Tensor frame({1, cfg.canvas, cfg.canvas});
      for (const auto& d : digits) {
        paste_glyph(frame, glyphs[static_cast<size_t>(d.glyph)],
                    static_cast<int>(std::lround(d.x)), static_cast<int>(std::lround(d.y)));
      }
      std::copy_n(frame.data(), frame.numel(),
                  video.data() + static_cast<int64_t>(t) * frame.numel());
    }
    ds.videos.push_back(std::move(video));
  }
  ds.bounces = log;
  return {std::move(ds), std::move(log)};
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

namespace {
std::string video_dir_name(int v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%05d", v);
  return buf;
}
std::string frame_file_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.pgm", t);
  return buf;
}
}  // namespace

void save_dataset(const VideoDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream mf(fs::path(dir) / "manifest.txt");
    if (!mf) throw FormatError("save_dataset: cannot write manifest in " + dir);
    mf << "num_videos=" << ds.num_videos() << "\n";
    mf << "T=" << ds.seq_len << "\n";
    mf << "H=" << ds.height << "\n";
    mf << "W=" << ds.width << "\n";
    mf << "seed=" << ds.seed << "\n";
    mf << "split=" << ds.split << "\n";
  }
  for (int v = 0; v < ds.num_videos(); ++v) {
    fs::path vdir = fs::path(dir) / video_dir_name(v);
    fs::create_directories(vdir);
    const Tensor& video = ds.videos[static_cast<size_t>(v)];
    for (int t = 0; t < ds.seq_len; ++t) {
      Tensor frame({1, ds.height, ds.width});
      std::copy_n(video.data() + static_cast<int64_t>(t) * frame.numel(), frame.numel(),
                  frame.data());
      write_pgm((vdir / frame_file_name(t)).string(), frame);
    }
  }
  if (ds.bounces) {
    std::ofstream bf(fs::path(dir) / "bounces.csv");
    bf << "video,frame,wall,dir_x,dir_y\n";
    for (size_t v = 0; v < ds.bounces->per_video.size(); ++v) {
      for (const auto& e : ds.bounces->per_video[v]) {
        bf << v << "," << e.frame << "," << wall_name(e.wall) << "," << format_double(e.dir_x)
           << "," << format_double(e.dir_y) << "\n";
      }
    }
  }
}

VideoDataset load_dataset(const std::string& dir) {
  fs::path manifest = fs::path(dir) / "manifest.txt";
  if (!fs::exists(manifest)) throw FormatError("load_dataset: missing " + manifest.string());
  Config mf = Config::load(manifest.string());
  VideoDataset ds;
  int num_videos = static_cast<int>(mf.get_int("num_videos"));
  ds.seq_len = static_cast<int>(mf.get_int("T"));
  ds.height = static_cast<int>(mf.get_int("H"));
  ds.width = static_cast<int>(mf.get_int("W"));
  ds.seed = mf.get_u64("seed", 0);
  ds.split = mf.get_str("split", "train");

  for (int v = 0; v < num_videos; ++v) {
    fs::path vdir = fs::path(dir) / video_dir_name(v);
    if (!fs::exists(vdir))
      throw FormatError("load_dataset: manifest declares " + std::to_string(num_videos) +
                        " videos but " + vdir.string() + " is missing");
    Tensor video({ds.seq_len, 1, ds.height, ds.width});
    for (int t = 0; t < ds.seq_len; ++t) {
      fs::path fpath = vdir / frame_file_name(t);
      if (!fs::exists(fpath))
        throw FormatError("load_dataset: frame count mismatch, missing " + fpath.string());
      Tensor frame = read_pgm(fpath.string());
      if (frame.dim(1) != ds.height || frame.dim(2) != ds.width)
        throw FormatError("load_dataset: frame size mismatch vs manifest in " + fpath.string());
      std::copy_n(frame.data(), frame.numel(),
                  video.data() + static_cast<int64_t>(t) * frame.numel());
    }
    ds.videos.push_back(std::move(video));
  }

  fs::path bpath = fs::path(dir) / "bounces.csv";
  if (fs::exists(bpath)) {
    BounceLog log;
    log.per_video.resize(static_cast<size_t>(num_videos));
    std::ifstream bf(bpath);
    std::string line;
    std::getline(bf, line);  // header
    while (std::getline(bf, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      std::string tok;
      std::vector<std::string> cols;
      while (std::getline(is, tok, ',')) cols.push_back(tok);
      if (cols.size() != 5) throw FormatError("load_dataset: malformed row in " + bpath.string());
      int v = std::stoi(cols[0]);
      if (v < 0 || v >= num_videos)
        throw FormatError("load_dataset: bounce row for unknown video in " + bpath.string());
      BounceEvent e;
      e.frame = std::stoi(cols[1]);
      e.wall = wall_from_name(cols[2]);
      e.dir_x = std::stod(cols[3]);
      e.dir_y = std::stod(cols[4]);
      log.per_video[static_cast<size_t>(v)].push_back(e);
    }
    ds.bounces = std::move(log);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

BatchIterator::BatchIterator(const VideoDataset& ds, int batch_size, int context_frames,
                             int total_len, uint64_t seed)
    : ds_(ds), batch_size_(batch_size), context_frames_(context_frames), total_len_(total_len) {
  if (total_len > ds.seq_len)
    throw ConfigError("batch_iter: total_len " + std::to_string(total_len) + " exceeds T " +
                      std::to_string(ds.seq_len));
  if (context_frames < 1 || context_frames >= total_len)
    throw ConfigError("batch_iter: need 1 <= F < total_len");
  if (batch_size < 1) throw ConfigError("batch_iter: batch_size must be >= 1");

  int n = ds.num_videos();
  order_.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order_[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i + 1)));
    std::swap(order_[static_cast<size_t>(i)], order_[static_cast<size_t>(j)]);
  }
  window_starts_.resize(static_cast<size_t>(n));
  int max_start = ds.seq_len - total_len;
  for (int i = 0; i < n; ++i) {
    window_starts_[static_cast<size_t>(i)] =
        max_start > 0 ? static_cast<int>(rng.next_below(static_cast<uint64_t>(max_start + 1))) : 0;
  }
}

int BatchIterator::num_batches() const {
  int n = ds_.num_videos();
  return (n + batch_size_ - 1) / batch_size_;
}

std::optional<VideoBatch> BatchIterator::next() {
  int n = ds_.num_videos();
  if (cursor_ >= static_cast<size_t>(n)) return std::nullopt;
  int b = std::min(batch_size_, n - static_cast<int>(cursor_));
  VideoBatch batch;
  batch.context_frames = context_frames_;
  batch.frames = Tensor({b, total_len_, 1, ds_.height, ds_.width});
  int64_t frame_numel = static_cast<int64_t>(ds_.height) * ds_.width;
  for (int i = 0; i < b; ++i) {
    int vid = order_[cursor_ + static_cast<size_t>(i)];
    int t0 = window_starts_[cursor_ + static_cast<size_t>(i)];
    batch.video_ids.push_back(vid);
    batch.window_starts.push_back(t0);
    const Tensor& video = ds_.videos[static_cast<size_t>(vid)];
    std::copy_n(video.data() + static_cast<int64_t>(t0) * frame_numel,
                static_cast<int64_t>(total_len_) * frame_numel,
                batch.frames.data() + static_cast<int64_t>(i) * total_len_ * frame_numel);
  }
  cursor_ += static_cast<size_t>(b);
  return batch;
}

BatchIterator batch_iter(const VideoDataset& ds, int batch_size, int context_frames, int total_len,
                         uint64_t seed) {
  return BatchIterator(ds, batch_size, context_frames, total_len, seed);
}

}  // namespace nuq
