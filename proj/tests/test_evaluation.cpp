#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nuq/errors.hpp"
#include "nuq/evaluation.hpp"
#include "nuq/rng.hpp"
#include "ssim_reference_data.hpp"

using namespace nuq;
namespace fs = std::filesystem;

namespace {

Tensor fixture_frame(const double* base, int index) {
  Tensor t({ssim_reference::kSize, ssim_reference::kSize});
  std::copy_n(base + static_cast<int64_t>(index) * t.numel(), t.numel(), t.data());
  return t;
}

Tensor random_frame(int side, uint64_t seed) {
  Rng rng(seed);
  Tensor t({side, side});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("nuq_eval_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("ssim matches the frozen independent reference within 1e-4") {
  for (int i = 0; i < ssim_reference::kPairs; ++i) {
    Tensor a = fixture_frame(ssim_reference::kFramesA, i);
    Tensor b = fixture_frame(ssim_reference::kFramesB, i);
    CHECK(std::abs(ssim(a, b) - ssim_reference::kExpected[i]) < 1e-4);
  }
  Tensor anti = fixture_frame(ssim_reference::kAntiFrame, 0);
  Tensor inv({ssim_reference::kSize, ssim_reference::kSize});
  for (int64_t i = 0; i < inv.numel(); ++i) inv[i] = 1.0 - anti[i];
  double v = ssim(anti, inv);
  CHECK(std::abs(v - ssim_reference::kAntiExpected) < 1e-4);
  CHECK(v < 0.0);
}

TEST_CASE("ssim identities and symmetry") {
  Tensor a = random_frame(20, 1);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Tensor c({20, 20}, 0.5);
  CHECK(ssim(c, c) == doctest::Approx(1.0).epsilon(1e-12));
  Tensor b = random_frame(20, 2);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
  CHECK_THROWS_AS(ssim(a, random_frame(24, 3)), ShapeError);
  CHECK_THROWS_AS(ssim(random_frame(8, 4), random_frame(8, 5)), ShapeError);  // below window
}

TEST_CASE("psnr hand values and caps") {
  Tensor a = random_frame(16, 6);
  CHECK(psnr(a, a) == 100.0);

  Tensor b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] = a[i] + 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));

  Tensor zero({4, 4}, 0.0), one({4, 4}, 1.0);
  CHECK(psnr(zero, one) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("psnr strictly decreases with noise amplitude") {
  Tensor a = random_frame(20, 7);
  double prev = 1e9;
  for (double amp : {0.01, 0.05, 0.1, 0.2}) {
    Rng rng(8);
    Tensor b = a;
    for (int64_t i = 0; i < b.numel(); ++i) b[i] = a[i] + amp * (rng.uniform() - 0.5);
    double v = psnr(a, b);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("best-of-k selects the ground-truth future when present") {
  FutureSet set;
  set.video_ids = {0};
  std::vector<Tensor> gt{random_frame(20, 10).reshaped({1, 20, 20}),
                         random_frame(20, 11).reshaped({1, 20, 20})};
  std::vector<std::vector<Tensor>> futures;
  futures.push_back({random_frame(20, 12).reshaped({1, 20, 20}),
                     random_frame(20, 13).reshaped({1, 20, 20})});
  futures.push_back(gt);  // exact copy of ground truth
  set.futures.push_back(futures);
  set.gt.push_back(gt);

  MetricReport report = score_best_of_k(set, SelectBy::kSsim);
  CHECK(report.videos[0].best_future == 1);
  CHECK(report.avg_ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.avg_psnr == doctest::Approx(100.0));
}

TEST_CASE("best-of-k is nondecreasing over nested candidate prefixes") {
  Rng rng(14);
  FutureSet set;
  set.video_ids = {0, 1};
  for (int v = 0; v < 2; ++v) {
    std::vector<Tensor> gt{random_frame(20, 20 + static_cast<uint64_t>(v)).reshaped({1, 20, 20})};
    std::vector<std::vector<Tensor>> futures;
    for (int f = 0; f < 8; ++f)
      futures.push_back(
          {random_frame(20, 100 + static_cast<uint64_t>(10 * v + f)).reshaped({1, 20, 20})});
    set.futures.push_back(futures);
    set.gt.push_back(gt);
  }
  DiversityReport div = diversity_report(set, {1, 2, 4, 8});
  for (size_t i = 1; i < div.best_of_k_ssim.size(); ++i)
    CHECK(div.best_of_k_ssim[i] >= div.best_of_k_ssim[i - 1]);
}

TEST_CASE("identical futures give flat best-of-k and unit intra-SSIM") {
  FutureSet set;
  set.video_ids = {0};
  Tensor frame = random_frame(20, 31).reshaped({1, 20, 20});
  std::vector<Tensor> gt{random_frame(20, 32).reshaped({1, 20, 20})};
  std::vector<std::vector<Tensor>> futures(4, std::vector<Tensor>{frame});
  set.futures.push_back(futures);
  set.gt.push_back(gt);
  DiversityReport div = diversity_report(set, {1, 2, 4});
  CHECK(div.best_of_k_ssim[0] == doctest::Approx(div.best_of_k_ssim[2]).epsilon(1e-12));
  CHECK(div.intra_ssim_per_t[0] == doctest::Approx(1.0).epsilon(1e-12));

  FutureSet single;
  single.video_ids = {0};
  single.futures.push_back({{frame}});
  single.gt.push_back(gt);
  CHECK_THROWS_AS(diversity_report(single, {1}), ConfigError);
}

TEST_CASE("uncertainty normalization follows the min-max rule") {
  std::vector<std::vector<double>> traces{{1.0, 1.0, 2.0}, {3.0, 3.0, 3.0}};
  UncertaintyReport report = uncertainty_report(traces, {0, 1}, nullptr, 5);
  CHECK(report.sequences[0].u == std::vector<double>{0.0, 0.0, 1.0});
  CHECK(report.sequences[1].u == std::vector<double>{0.0, 0.0, 0.0});  // constant trace
  CHECK_THROWS_AS(uncertainty_report({{}}, {0}, nullptr, 5), ConfigError);
}

TEST_CASE("traces spiking at bounce frames score near > elsewhere") {
  BounceLog log;
  log.per_video.resize(2);
  log.per_video[0].push_back({7, Wall::kLeft, 1.0, 0.0});
  log.per_video[1].push_back({9, Wall::kTop, 0.0, 1.0});
  // Predicted frames start at F=5; trace index i <-> frame 5+i.
  std::vector<std::vector<double>> traces{
      {0.1, 0.1, 1.0, 0.1, 0.1, 0.1},   // spike at frame 7
      {0.1, 0.1, 0.1, 0.1, 0.9, 0.1}};  // spike at frame 9
  UncertaintyReport report = uncertainty_report(traces, {0, 1}, &log, 5);
  for (const auto& seq : report.sequences) {
    CHECK(seq.has_both);
    CHECK(seq.near_mean > seq.else_mean);
  }
  CHECK(report.pooled_near_mean > report.pooled_else_mean);
  CHECK(report.wins == 2);
  CHECK(report.sign_test_p == doctest::Approx(0.25));
}

TEST_CASE("sign test matches exact binomial tails") {
  CHECK(sign_test_p_value(8, 10) == doctest::Approx(56.0 / 1024.0).epsilon(1e-12));
  CHECK(sign_test_p_value(9, 10) == doctest::Approx(11.0 / 1024.0).epsilon(1e-12));
  CHECK(sign_test_p_value(0, 10) == doctest::Approx(1.0));
  CHECK(sign_test_p_value(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("emit_reports writes the schema and reruns byte-identically") {
  MetricReport metrics;
  metrics.K = 2;
  MetricReport::PerVideo pv;
  pv.video = 0;
  pv.best_future = 1;
  pv.ssim_per_frame = {0.9, 0.8};
  pv.psnr_per_frame = {20.0, 18.0};
  metrics.videos.push_back(pv);
  metrics.avg_ssim = 0.85;
  metrics.avg_psnr = 19.0;

  DiversityReport div;
  div.k_grid = {1, 2};
  div.best_of_k_ssim = {0.7, 0.8};
  div.intra_ssim_per_t = {0.6, 0.65};

  std::vector<std::vector<double>> traces{{0.1, 0.5, 0.2}};
  BounceLog log;
  log.per_video.resize(1);
  log.per_video[0].push_back({6, Wall::kLeft, 1.0, 0.0});
  UncertaintyReport unc = uncertainty_report(traces, {0}, &log, 5);

  fs::path dir = temp_dir("emit");
  emit_reports(&metrics, &div, &unc, dir.string());
  for (const char* name : {"metrics.csv", "diversity_bestofk.csv", "diversity_intra.csv",
                           "uncertainty.csv", "bestofk_curve.ppm", "intra_ssim_curve.ppm",
                           "uncertainty_trace.ppm"})
    CHECK(fs::exists(dir / name));

  std::string metrics_csv = slurp(dir / "metrics.csv");
  CHECK(metrics_csv.find("video,frame,ssim,psnr") == 0);
  CHECK(metrics_csv.find("all,all,") != std::string::npos);

  // Rerun is byte-identical.
  std::string before = slurp(dir / "uncertainty.csv");
  std::string plot_before = slurp(dir / "uncertainty_trace.ppm");
  emit_reports(&metrics, &div, &unc, dir.string());
  CHECK(slurp(dir / "uncertainty.csv") == before);
  CHECK(slurp(dir / "uncertainty_trace.ppm") == plot_before);
}

TEST_CASE("emit_reports with nothing to write warns and writes nothing") {
  fs::path dir = temp_dir("empty");
  emit_reports(nullptr, nullptr, nullptr, dir.string());
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("render_report_plots rebuilds plots from emitted csv files") {
  MetricReport metrics;
  metrics.avg_ssim = 0.5;
  metrics.avg_psnr = 15.0;
  DiversityReport div;
  div.k_grid = {1, 5, 10};
  div.best_of_k_ssim = {0.5, 0.6, 0.62};
  div.intra_ssim_per_t = {0.5, 0.55};
  std::vector<std::vector<double>> traces{{0.2, 0.9, 0.1, 0.4}};
  UncertaintyReport unc = uncertainty_report(traces, {0}, nullptr, 5);

  fs::path dir = temp_dir("plots");
  emit_reports(&metrics, &div, &unc, dir.string());
  fs::path out = temp_dir("plots_out");
  render_report_plots(dir.string(), out.string());
  int found = 0;
  for (const char* name : {"bestofk_curve.ppm", "intra_ssim_curve.ppm", "uncertainty_trace.ppm"})
    if (fs::exists(out / name)) ++found;
  CHECK(found == 3);
}
