#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nuq/model.hpp"
#include "nuq/smm_data.hpp"

namespace nuq {

/// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01)^2, C2=(0.03)^2
/// for unit dynamic range, averaged over all valid window positions.
double ssim(const Tensor& a, const Tensor& b);

/// 20*log10(max_val / sqrt(MSE)), capped at 100 dB.
double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);

enum class SelectBy { kSsim, kPsnr };
SelectBy select_by_from_string(const std::string& s);

/// All futures generated for the evaluated videos, plus the aligned ground
/// truth; shared between the best-of-K and diversity analyses.
struct FutureSet {
  std::vector<int> video_ids;
  // futures[v][f][t]: frame [1,H,W]
  std::vector<std::vector<std::vector<Tensor>>> futures;
  // gt[v][t]: ground-truth predicted frame
  std::vector<std::vector<Tensor>> gt;
};

FutureSet generate_futures(NuqModel& model, const VideoDataset& ds, int num_futures,
                           int context_frames, int steps, uint64_t seed, int max_videos = 0);

struct MetricReport {
  int K = 0;
  struct PerVideo {
    int video = 0;
    int best_future = 0;
    std::vector<double> ssim_per_frame;
    std::vector<double> psnr_per_frame;
  };
  std::vector<PerVideo> videos;
  double avg_ssim = 0.0, avg_psnr = 0.0;
};

/// Per video: pick the future maximizing the mean per-frame score, report its
/// per-frame SSIM/PSNR. Candidate sets are seed-nested, so reports for larger
/// K dominate smaller K.
MetricReport score_best_of_k(const FutureSet& set, SelectBy select_by = SelectBy::kSsim);
MetricReport best_of_k_eval(NuqModel& model, const VideoDataset& ds, int K, int context_frames,
                            int steps, uint64_t seed, SelectBy select_by = SelectBy::kSsim,
                            int max_videos = 0);

struct DiversityReport {
  std::vector<int> k_grid;
  std::vector<double> best_of_k_ssim;    // avg best-of-k over nested prefixes
  std::vector<double> intra_ssim_per_t;  // mean pairwise SSIM between futures
};

DiversityReport diversity_report(const FutureSet& set, std::vector<int> k_grid);

struct UncertaintyReport {
  struct PerSequence {
    int video = 0;
    std::vector<double> s;  // raw trace, aligned to predicted frames
    std::vector<double> u;  // min-max normalized (all zeros when constant)
    std::vector<bool> near_bounce;  // per trace entry
    double near_mean = 0.0, else_mean = 0.0;
    bool has_both = false;  // sequence has frames in both groups
  };
  int context_frames = 0;
  std::vector<PerSequence> sequences;
  double pooled_near_mean = 0.0, pooled_else_mean = 0.0;
  int wins = 0, comparisons = 0;
  double sign_test_p = 1.0;  // one-sided, near > elsewhere
};

/// Bounce-aligned trace statistics: frames within +-1 of a logged bounce
/// versus the rest. Trace index i corresponds to frame context_frames + i.
UncertaintyReport uncertainty_report(const std::vector<std::vector<double>>& traces,
                                     const std::vector<int>& video_ids,
                                     const BounceLog* bounce_log, int context_frames);

/// Writes the delimiter-separated report files plus rendered plot images.
/// Null reports are skipped; if everything is null a warning is printed and
/// no files are written.
void emit_reports(const MetricReport* metrics, const DiversityReport* diversity,
                  const UncertaintyReport* uncertainty, const std::string& out_dir);

/// Renders the three plot images from previously emitted report files.
void render_report_plots(const std::string& in_dir, const std::string& out_dir);

/// One-sided exact binomial tail P(X >= wins), X ~ Bin(n, 1/2).
double sign_test_p_value(int wins, int n);

}  // namespace nuq
