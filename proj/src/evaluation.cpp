#include "nuq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nuq/config.hpp"
#include "nuq/errors.hpp"
#include "nuq/plot.hpp"

namespace fs = std::filesystem;

namespace nuq {

namespace {

constexpr int kSsimRadius = 5;  // 11-tap window
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& ssim_kernel() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(2 * kSsimRadius + 1);
    double sum = 0.0;
    for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
      double v = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
      k[static_cast<size_t>(i + kSsimRadius)] = v;
      sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

// Separable valid-mode correlation with the SSIM kernel.
// in: [H,W] flat; out: [H-2r, W-2r] flat.
void filter_valid(const std::vector<double>& in, int h, int w, std::vector<double>& tmp,
                  std::vector<double>& out) {
  const auto& k = ssim_kernel();
  int r = kSsimRadius;
  int ow = w - 2 * r;
  tmp.assign(static_cast<size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 2 * r + 1; ++i) acc += k[static_cast<size_t>(i)] * in[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  int oh = h - 2 * r;
  out.assign(static_cast<size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 2 * r + 1; ++i) acc += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
}

std::pair<const double*, std::pair<int, int>> frame_view(const Tensor& t, const char* op) {
  if (t.ndim() == 2) return {t.data(), {t.dim(0), t.dim(1)}};
  if (t.ndim() == 3 && t.dim(0) == 1) return {t.data(), {t.dim(1), t.dim(2)}};
  throw ShapeError(std::string(op) + ": expected [H,W] or [1,H,W], got " + t.shape_str());
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  auto [pa, dims_a] = frame_view(a, "ssim");
  auto [pb, dims_b] = frame_view(b, "ssim");
  if (dims_a != dims_b)
    throw ShapeError("ssim: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  int h = dims_a.first, w = dims_a.second;
  if (h < 2 * kSsimRadius + 1 || w < 2 * kSsimRadius + 1)
    throw ShapeError("ssim: frame smaller than the 11x11 window");

  size_t n = static_cast<size_t>(h) * w;
  std::vector<double> va(pa, pa + n), vb(pb, pb + n), vaa(n), vbb(n), vab(n);
  for (size_t i = 0; i < n; ++i) {
    vaa[i] = va[i] * va[i];
    vbb[i] = vb[i] * vb[i];
    vab[i] = va[i] * vb[i];
  }
  std::vector<double> tmp, ua, ub, uaa, ubb, uab;
  filter_valid(va, h, w, tmp, ua);
  filter_valid(vb, h, w, tmp, ub);
  filter_valid(vaa, h, w, tmp, uaa);
  filter_valid(vbb, h, w, tmp, ubb);
  filter_valid(vab, h, w, tmp, uab);

  double acc = 0.0;
  for (size_t i = 0; i < ua.size(); ++i) {
    double ma = ua[i], mb = ub[i];
    double var_a = uaa[i] - ma * ma;
    double var_b = ubb[i] - mb * mb;
    double cov = uab[i] - ma * mb;
    double s = ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
               ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
    acc += s;
  }
  return acc / static_cast<double>(ua.size());
}

double psnr(const Tensor& a, const Tensor& b, double max_val) {
  auto [pa, dims_a] = frame_view(a, "psnr");
  auto [pb, dims_b] = frame_view(b, "psnr");
  if (dims_a != dims_b)
    throw ShapeError("psnr: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  size_t n = static_cast<size_t>(dims_a.first) * dims_a.second;
  double mse = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = pa[i] - pb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(n);
  if (mse <= 0.0) return 100.0;
  double v = 20.0 * std::log10(max_val / std::sqrt(mse));
  return std::min(v, 100.0);
}

SelectBy select_by_from_string(const std::string& s) {
  if (s == "ssim") return SelectBy::kSsim;
  if (s == "psnr") return SelectBy::kPsnr;
  throw ConfigError("unknown selection criterion: " + s + " (expected ssim | psnr)");
}

FutureSet generate_futures(NuqModel& model, const VideoDataset& ds, int num_futures,
                           int context_frames, int steps, uint64_t seed, int max_videos) {
  if (num_futures < 1) throw ConfigError("generate_futures: num_futures must be >= 1");
  if (context_frames + steps > ds.seq_len)
    throw ConfigError("generate_futures: context + steps exceeds dataset T=" +
                      std::to_string(ds.seq_len));
  int n = ds.num_videos();
  if (max_videos > 0) n = std::min(n, max_videos);

  FutureSet set;
  int64_t plane = static_cast<int64_t>(ds.height) * ds.width;
  for (int v = 0; v < n; ++v) {
    const Tensor& video = ds.videos[static_cast<size_t>(v)];
    Tensor context({context_frames, 1, ds.height, ds.width});
    std::copy_n(video.data(), context.numel(), context.data());
    GenResult gen = model.rollout_generate(context, steps, num_futures,
                                           derive_seed(seed, {0xE7A1, static_cast<uint64_t>(v)}));
    std::vector<Tensor> gt;
    for (int t = 0; t < steps; ++t) {
      Tensor frame({1, ds.height, ds.width});
      std::copy_n(video.data() + (static_cast<int64_t>(context_frames) + t) * plane, plane,
                  frame.data());
      gt.push_back(std::move(frame));
    }
    set.video_ids.push_back(v);
    set.futures.push_back(std::move(gen.futures));
    set.gt.push_back(std::move(gt));
  }
  return set;
}

MetricReport score_best_of_k(const FutureSet& set, SelectBy select_by) {
  MetricReport report;
  if (set.futures.empty()) return report;
  report.K = static_cast<int>(set.futures[0].size());
  double ssim_acc = 0.0, psnr_acc = 0.0;
  int64_t frames = 0;
  for (size_t v = 0; v < set.futures.size(); ++v) {
    const auto& futures = set.futures[v];
    const auto& gt = set.gt[v];
    int best = 0;
    double best_score = -1e300;
    for (size_t f = 0; f < futures.size(); ++f) {
      double acc = 0.0;
      for (size_t t = 0; t < gt.size(); ++t) {
        acc += select_by == SelectBy::kSsim ? ssim(futures[f][t], gt[t])
                                            : psnr(futures[f][t], gt[t]);
      }
      double mean = acc / static_cast<double>(gt.size());
      if (mean > best_score) {
        best_score = mean;
        best = static_cast<int>(f);
      }
    }
    MetricReport::PerVideo pv;
    pv.video = set.video_ids[v];
    pv.best_future = best;
    for (size_t t = 0; t < gt.size(); ++t) {
      double s = ssim(futures[static_cast<size_t>(best)][t], gt[t]);
      double p = psnr(futures[static_cast<size_t>(best)][t], gt[t]);
      pv.ssim_per_frame.push_back(s);
      pv.psnr_per_frame.push_back(p);
      ssim_acc += s;
      psnr_acc += p;
      ++frames;
    }
    report.videos.push_back(std::move(pv));
  }
  if (frames > 0) {
    report.avg_ssim = ssim_acc / static_cast<double>(frames);
    report.avg_psnr = psnr_acc / static_cast<double>(frames);
  }
  return report;
}

MetricReport best_of_k_eval(NuqModel& model, const VideoDataset& ds, int K, int context_frames,
                            int steps, uint64_t seed, SelectBy select_by, int max_videos) {
  FutureSet set = generate_futures(model, ds, K, context_frames, steps, seed, max_videos);
  return score_best_of_k(set, select_by);
}

DiversityReport diversity_report(const FutureSet& set, std::vector<int> k_grid) {
  if (set.futures.empty()) throw ConfigError("diversity_report: no videos");
  int K = static_cast<int>(set.futures[0].size());
  if (K < 2) throw ConfigError("diversity_report: need >= 2 futures for the intra metric");
  int steps = static_cast<int>(set.gt[0].size());

  DiversityReport report;
  std::sort(k_grid.begin(), k_grid.end());
  for (int k : k_grid) {
    if (k < 1 || k > K)
      throw ConfigError("diversity_report: k=" + std::to_string(k) + " outside [1, K=" +
                        std::to_string(K) + "]");
  }
  report.k_grid = k_grid;

  // Best-of-k over nested prefixes of the candidate list.
  for (int k : k_grid) {
    double acc = 0.0;
    int64_t count = 0;
    for (size_t v = 0; v < set.futures.size(); ++v) {
      double best = -1e300;
      for (int f = 0; f < k; ++f) {
        double mean = 0.0;
        for (int t = 0; t < steps; ++t)
          mean += ssim(set.futures[v][static_cast<size_t>(f)][static_cast<size_t>(t)],
                       set.gt[v][static_cast<size_t>(t)]);
        mean /= static_cast<double>(steps);
        best = std::max(best, mean);
      }
      acc += best;
      ++count;
    }
    report.best_of_k_ssim.push_back(acc / static_cast<double>(count));
  }

  // Mean pairwise SSIM between futures, per timestep.
  for (int t = 0; t < steps; ++t) {
    double acc = 0.0;
    int64_t pairs = 0;
    for (size_t v = 0; v < set.futures.size(); ++v) {
      for (int i = 0; i < K; ++i) {
        for (int j = i + 1; j < K; ++j) {
          acc += ssim(set.futures[v][static_cast<size_t>(i)][static_cast<size_t>(t)],
                      set.futures[v][static_cast<size_t>(j)][static_cast<size_t>(t)]);
          ++pairs;
        }
      }
    }
    report.intra_ssim_per_t.push_back(acc / static_cast<double>(pairs));
  }
  return report;
}

double sign_test_p_value(int wins, int n) {
  if (n <= 0) return 1.0;
  // P(X >= wins) for X ~ Bin(n, 1/2), exact via log binomial coefficients.
  double p = 0.0;
  for (int i = wins; i <= n; ++i) {
    double log_c = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
    p += std::exp(log_c - n * std::log(2.0));
  }
  return std::min(p, 1.0);
}

UncertaintyReport uncertainty_report(const std::vector<std::vector<double>>& traces,
                                     const std::vector<int>& video_ids,
                                     const BounceLog* bounce_log, int context_frames) {
  if (traces.empty()) throw ConfigError("uncertainty_report: empty trace set");
  if (traces.size() != video_ids.size())
    throw ConfigError("uncertainty_report: traces/video_ids length mismatch");

  UncertaintyReport report;
  report.context_frames = context_frames;
  double near_acc = 0.0, else_acc = 0.0;
  int64_t near_n = 0, else_n = 0;
  for (size_t i = 0; i < traces.size(); ++i) {
    const auto& s = traces[i];
    if (s.empty()) throw ConfigError("uncertainty_report: empty trace for video " +
                                     std::to_string(video_ids[i]));
    UncertaintyReport::PerSequence seq;
    seq.video = video_ids[i];
    seq.s = s;
    double lo = *std::min_element(s.begin(), s.end());
    double hi = *std::max_element(s.begin(), s.end());
    seq.u.resize(s.size(), 0.0);
    seq.near_bounce.assign(s.size(), false);
    if (hi > lo) {
      for (size_t t = 0; t < s.size(); ++t) seq.u[t] = (s[t] - lo) / (hi - lo);
    }
    if (bounce_log && seq.video >= 0 &&
        static_cast<size_t>(seq.video) < bounce_log->per_video.size()) {
      const auto& events = bounce_log->per_video[static_cast<size_t>(seq.video)];
      double nm = 0.0, em = 0.0;
      int64_t nn = 0, en = 0;
      for (size_t t = 0; t < s.size(); ++t) {
        int frame = context_frames + static_cast<int>(t);
        bool near = false;
        for (const auto& e : events) {
          if (std::abs(e.frame - frame) <= 1) {
            near = true;
            break;
          }
        }
        seq.near_bounce[t] = near;
        if (near) {
          nm += seq.u[t];
          ++nn;
        } else {
          em += seq.u[t];
          ++en;
        }
      }
      if (nn > 0 && en > 0) {
        seq.near_mean = nm / static_cast<double>(nn);
        seq.else_mean = em / static_cast<double>(en);
        seq.has_both = true;
        near_acc += nm;
        near_n += nn;
        else_acc += em;
        else_n += en;
        if (seq.near_mean != seq.else_mean) {
          ++report.comparisons;
          if (seq.near_mean > seq.else_mean) ++report.wins;
        }
      }
    }
    report.sequences.push_back(std::move(seq));
  }
  if (near_n > 0) report.pooled_near_mean = near_acc / static_cast<double>(near_n);
  if (else_n > 0) report.pooled_else_mean = else_acc / static_cast<double>(else_n);
  report.sign_test_p = sign_test_p_value(report.wins, report.comparisons);
  return report;
}

// ---------------------------------------------------------------------------
// report emission
// ---------------------------------------------------------------------------

namespace {

void write_metrics_csv(const MetricReport& m, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("emit_reports: cannot write " + path.string());
  f << "video,frame,ssim,psnr\n";
  for (const auto& pv : m.videos) {
    for (size_t t = 0; t < pv.ssim_per_frame.size(); ++t) {
      f << pv.video << "," << t << "," << format_double(pv.ssim_per_frame[t]) << ","
        << format_double(pv.psnr_per_frame[t]) << "\n";
    }
  }
  f << "all,all," << format_double(m.avg_ssim) << "," << format_double(m.avg_psnr) << "\n";
}

void write_diversity_csv(const DiversityReport& d, const fs::path& bestofk,
                         const fs::path& intra) {
  {
    std::ofstream f(bestofk);
    if (!f) throw FormatError("emit_reports: cannot write " + bestofk.string());
    f << "k,best_of_k_ssim\n";
    for (size_t i = 0; i < d.k_grid.size(); ++i)
      f << d.k_grid[i] << "," << format_double(d.best_of_k_ssim[i]) << "\n";
  }
  {
    std::ofstream f(intra);
    if (!f) throw FormatError("emit_reports: cannot write " + intra.string());
    f << "t,intra_ssim\n";
    for (size_t t = 0; t < d.intra_ssim_per_t.size(); ++t)
      f << t << "," << format_double(d.intra_ssim_per_t[t]) << "\n";
  }
}

void write_uncertainty_csv(const UncertaintyReport& u, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("emit_reports: cannot write " + path.string());
  f << "video,frame,s,u,near_bounce\n";
  for (const auto& seq : u.sequences) {
    for (size_t t = 0; t < seq.s.size(); ++t) {
      f << seq.video << "," << u.context_frames + static_cast<int>(t) << ","
        << format_double(seq.s[t]) << "," << format_double(seq.u[t]) << ","
        << (seq.near_bounce[t] ? 1 : 0) << "\n";
    }
  }
  f << "# pooled_near_mean=" << format_double(u.pooled_near_mean)
    << " pooled_else_mean=" << format_double(u.pooled_else_mean) << " wins=" << u.wins
    << " comparisons=" << u.comparisons << " sign_test_p=" << format_double(u.sign_test_p)
    << "\n";
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("read_csv: cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::istringstream is(line);
    std::string tok;
    while (std::getline(is, tok, ',')) cols.push_back(tok);
    if (first) {
      table.header = cols;
      first = false;
    } else {
      table.rows.push_back(cols);
    }
  }
  return table;
}

}  // namespace

void emit_reports(const MetricReport* metrics, const DiversityReport* diversity,
                  const UncertaintyReport* uncertainty, const std::string& out_dir) {
  if (!metrics && !diversity && !uncertainty) {
    std::cerr << "warning: emit_reports called with no reports, nothing written\n";
    return;
  }
  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  if (metrics) write_metrics_csv(*metrics, dir / "metrics.csv");
  if (diversity)
    write_diversity_csv(*diversity, dir / "diversity_bestofk.csv", dir / "diversity_intra.csv");
  if (uncertainty) write_uncertainty_csv(*uncertainty, dir / "uncertainty.csv");
  render_report_plots(out_dir, out_dir);
}

void render_report_plots(const std::string& in_dir, const std::string& out_dir) {
  fs::create_directories(out_dir);
  fs::path in(in_dir), out(out_dir);

  if (fs::exists(in / "diversity_bestofk.csv")) {
    CsvTable t = read_csv(in / "diversity_bestofk.csv");
    PlotSeries s;
    s.label = "best-of-k SSIM";
    for (const auto& row : t.rows) {
      s.x.push_back(std::stod(row[0]));
      s.y.push_back(std::stod(row[1]));
    }
    render_line_plot((out / "bestofk_curve.ppm").string(), {s}, {}, "k", "ssim");
  }
  if (fs::exists(in / "diversity_intra.csv")) {
    CsvTable t = read_csv(in / "diversity_intra.csv");
    PlotSeries s;
    s.label = "intra SSIM";
    s.red = 180;
    s.green = 40;
    s.blue = 40;
    for (const auto& row : t.rows) {
      s.x.push_back(std::stod(row[0]));
      s.y.push_back(std::stod(row[1]));
    }
    render_line_plot((out / "intra_ssim_curve.ppm").string(), {s}, {}, "t", "ssim");
  }
  if (fs::exists(in / "uncertainty.csv")) {
    CsvTable t = read_csv(in / "uncertainty.csv");
    // Plot the first sequence's scaled trace with bounce markers.
    PlotSeries s;
    s.label = "u";
    s.red = 40;
    s.green = 100;
    s.blue = 180;
    std::vector<double> markers;
    std::string first_video;
    for (const auto& row : t.rows) {
      if (first_video.empty()) first_video = row[0];
      if (row[0] != first_video) break;
      s.x.push_back(std::stod(row[1]));
      s.y.push_back(std::stod(row[3]));
      if (row.size() > 4 && row[4] == "1") markers.push_back(std::stod(row[1]));
    }
    render_line_plot((out / "uncertainty_trace.ppm").string(), {s}, markers, "frame", "scaled u");
  }
}

}  // namespace nuq
