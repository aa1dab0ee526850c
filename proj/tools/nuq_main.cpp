#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "nuq/config.hpp"
#include "nuq/errors.hpp"
#include "nuq/evaluation.hpp"
#include "nuq/image_io.hpp"
#include "nuq/smm_data.hpp"
#include "nuq/training.hpp"

namespace fs = std::filesystem;
using namespace nuq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string dump_config;
};

std::string keys_help(const std::vector<std::string>& keys) {
  std::string s = "Config keys: ";
  for (size_t i = 0; i < keys.size(); ++i) {
    if (i) s += ", ";
    s += keys[i];
  }
  return s;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file");
  cmd->add_option("--set", opts.overrides, "override a config key (key=value, repeatable)");
  cmd->add_option("--dump-config", opts.dump_config,
                  "write the effective config to this path and exit");
}

Config build_config(const CommonOpts& opts, const std::vector<std::string>& allowed) {
  Config cfg;
  if (!opts.config_path.empty()) cfg = Config::load(opts.config_path);
  for (const std::string& kv : opts.overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.check_known_keys(allowed);
  return cfg;
}

// Fills defaults so --dump-config round-trips every accepted key.
const std::vector<std::string>& make_data_keys() {
  static const std::vector<std::string> keys = {"num_videos", "seq_len",      "canvas",
                                                "digit_size", "num_digits",   "speed",
                                                "digit_source", "seed",       "split",
                                                "out_dir"};
  return keys;
}

SynthConfig synth_from_config(const Config& c) {
  SynthConfig s;
  s.num_videos = static_cast<int>(c.get_int("num_videos", s.num_videos));
  s.seq_len = static_cast<int>(c.get_int("seq_len", s.seq_len));
  s.canvas = static_cast<int>(c.get_int("canvas", s.canvas));
  s.digit_size = static_cast<int>(c.get_int("digit_size", s.digit_size));
  s.num_digits = static_cast<int>(c.get_int("num_digits", s.num_digits));
  s.speed = c.get_double("speed", s.speed);
  s.digit_source = c.get_str("digit_source", s.digit_source);
  s.seed = c.get_u64("seed", s.seed);
  s.split = c.get_str("split", s.split);
  return s;
}

Config synth_to_config(const SynthConfig& s, const std::string& out_dir) {
  Config c;
  c.set("num_videos", std::to_string(s.num_videos));
  c.set("seq_len", std::to_string(s.seq_len));
  c.set("canvas", std::to_string(s.canvas));
  c.set("digit_size", std::to_string(s.digit_size));
  c.set("num_digits", std::to_string(s.num_digits));
  c.set("speed", format_double(s.speed));
  c.set("digit_source", s.digit_source);
  c.set("seed", std::to_string(s.seed));
  c.set("split", s.split);
  c.set("out_dir", out_dir);
  return c;
}

int cmd_make_data(const CommonOpts& opts) {
  Config cfg = build_config(opts, make_data_keys());
  SynthConfig synth = synth_from_config(cfg);
  std::string out_dir = cfg.get_str("out_dir", "dataset");
  if (!opts.dump_config.empty()) {
    synth_to_config(synth, out_dir).save(opts.dump_config);
    std::cout << "status=ok dumped=" << opts.dump_config << "\n";
    return kExitOk;
  }
  auto [ds, log] = synthesize_smmnist(synth);
  save_dataset(ds, out_dir);
  std::cout << "status=ok out=" << out_dir << " videos=" << ds.num_videos() << " T=" << ds.seq_len
            << " H=" << ds.height << " W=" << ds.width << " bounces=" << log.total_events()
            << "\n";
  return kExitOk;
}

int cmd_train(const CommonOpts& opts) {
  Config cfg_raw = build_config(opts, TrainConfig::config_keys());
  TrainConfig cfg = TrainConfig::from_config(cfg_raw);
  if (!opts.dump_config.empty()) {
    cfg.to_config().save(opts.dump_config);
    std::cout << "status=ok dumped=" << opts.dump_config << "\n";
    return kExitOk;
  }
  if (cfg.data_dir.empty()) throw ConfigError("train: data_dir is required");
  VideoDataset train_ds = load_dataset(cfg.data_dir);
  VideoDataset val_ds = cfg.val_dir.empty() ? train_ds : load_dataset(cfg.val_dir);
  if (cfg.canvas != train_ds.height)
    throw ConfigError("train: canvas " + std::to_string(cfg.canvas) +
                      " does not match dataset frame size " + std::to_string(train_ds.height));
  TrainResult res = train_run(cfg, train_ds, val_ds);
  double final_ssim = res.epoch_val_ssim.empty() ? 0.0 : res.epoch_val_ssim.back();
  std::cout << "status=ok variant=" << cfg.variant << " epochs=" << res.epochs_run
            << " final_val_ssim=" << format_double(final_ssim)
            << " best_val_ssim=" << format_double(res.best_val_ssim)
            << " ckpt=" << res.last_checkpoint << "\n";
  return kExitOk;
}

const std::vector<std::string>& generate_keys() {
  static const std::vector<std::string> keys = {"ckpt",  "data_dir", "video", "K",
                                                "steps", "seed",     "out_dir"};
  return keys;
}

int cmd_generate(const CommonOpts& opts) {
  Config cfg = build_config(opts, generate_keys());
  if (!opts.dump_config.empty()) {
    Config defaults;
    defaults.set("ckpt", cfg.get_str("ckpt", ""));
    defaults.set("data_dir", cfg.get_str("data_dir", ""));
    defaults.set("video", std::to_string(cfg.get_int("video", 0)));
    defaults.set("K", std::to_string(cfg.get_int("K", 3)));
    defaults.set("steps", std::to_string(cfg.get_int("steps", 10)));
    defaults.set("seed", std::to_string(cfg.get_u64("seed", 1)));
    defaults.set("out_dir", cfg.get_str("out_dir", "generated"));
    defaults.save(opts.dump_config);
    std::cout << "status=ok dumped=" << opts.dump_config << "\n";
    return kExitOk;
  }
  std::string ckpt_path = cfg.get_str("ckpt", "");
  if (ckpt_path.empty() || !fs::exists(ckpt_path))
    throw ConfigError("generate: missing checkpoint: " + ckpt_path);
  LoadedModel lm = load_model(ckpt_path);
  VideoDataset ds = load_dataset(cfg.get_str("data_dir"));
  int video = static_cast<int>(cfg.get_int("video", 0));
  if (video < 0 || video >= ds.num_videos())
    throw ConfigError("generate: video index out of range");
  int K = static_cast<int>(cfg.get_int("K", 3));
  int steps = static_cast<int>(cfg.get_int("steps", lm.cfg.predict_len));
  uint64_t seed = cfg.get_u64("seed", 1);
  std::string out_dir = cfg.get_str("out_dir", "generated");

  int F = lm.cfg.F;
  Tensor context({F, 1, ds.height, ds.width});
  std::copy_n(ds.videos[static_cast<size_t>(video)].data(), context.numel(), context.data());
  GenResult gen = lm.model->rollout_generate(context, steps, K, seed);

  fs::create_directories(out_dir);
  for (int f = 0; f < K; ++f) {
    char dname[32];
    std::snprintf(dname, sizeof(dname), "future_%02d", f);
    fs::path fdir = fs::path(out_dir) / dname;
    fs::create_directories(fdir);
    for (int t = 0; t < steps; ++t) {
      char fname[32];
      std::snprintf(fname, sizeof(fname), "frame_%04d.pgm", t);
      write_pgm((fdir / fname).string(), gen.futures[static_cast<size_t>(f)][static_cast<size_t>(t)]);
    }
    char tname[32];
    std::snprintf(tname, sizeof(tname), "trace_%02d.csv", f);
    std::ofstream tf(fs::path(out_dir) / tname);
    tf << "step,s\n";
    for (int t = 0; t < steps; ++t)
      tf << t << "," << format_double(gen.s_traces[static_cast<size_t>(f)][static_cast<size_t>(t)])
         << "\n";
  }
  std::cout << "status=ok futures=" << K << " steps=" << steps << " out=" << out_dir << "\n";
  return kExitOk;
}

const std::vector<std::string>& eval_keys() {
  static const std::vector<std::string> keys = {"ckpt",    "data_dir", "K",        "steps",
                                                "seed",    "out_dir",  "select_by", "max_videos"};
  return keys;
}

int cmd_eval(const CommonOpts& opts) {
  Config cfg = build_config(opts, eval_keys());
  if (!opts.dump_config.empty()) {
    Config defaults;
    defaults.set("ckpt", cfg.get_str("ckpt", ""));
    defaults.set("data_dir", cfg.get_str("data_dir", ""));
    defaults.set("K", std::to_string(cfg.get_int("K", 10)));
    defaults.set("steps", std::to_string(cfg.get_int("steps", 0)));
    defaults.set("seed", std::to_string(cfg.get_u64("seed", 1)));
    defaults.set("out_dir", cfg.get_str("out_dir", "eval_out"));
    defaults.set("select_by", cfg.get_str("select_by", "ssim"));
    defaults.set("max_videos", std::to_string(cfg.get_int("max_videos", 0)));
    defaults.save(opts.dump_config);
    std::cout << "status=ok dumped=" << opts.dump_config << "\n";
    return kExitOk;
  }
  std::string ckpt_path = cfg.get_str("ckpt", "");
  if (ckpt_path.empty() || !fs::exists(ckpt_path))
    throw ConfigError("eval: missing checkpoint: " + ckpt_path);
  LoadedModel lm = load_model(ckpt_path);
  VideoDataset ds = load_dataset(cfg.get_str("data_dir"));
  int K = static_cast<int>(cfg.get_int("K", 10));
  int F = lm.cfg.F;
  int steps = static_cast<int>(cfg.get_int("steps", 0));
  if (steps <= 0) steps = std::min(lm.cfg.predict_len, ds.seq_len - F);
  uint64_t seed = cfg.get_u64("seed", 1);
  std::string out_dir = cfg.get_str("out_dir", "eval_out");
  SelectBy select_by = select_by_from_string(cfg.get_str("select_by", "ssim"));
  int max_videos = static_cast<int>(cfg.get_int("max_videos", 0));

  FutureSet futures = generate_futures(*lm.model, ds, K, F, steps, seed, max_videos);
  MetricReport metrics = score_best_of_k(futures, select_by);
  metrics.K = K;

  std::optional<DiversityReport> diversity;
  if (K >= 2) {
    std::vector<int> grid;
    for (int k : {1, 5, 10, 20}) {
      if (k <= K) grid.push_back(k);
    }
    if (grid.empty() || grid.back() != K) grid.push_back(K);
    diversity = diversity_report(futures, grid);
  }

  // Uncertainty traces conditioned on the real frames (prior network only).
  std::vector<std::vector<double>> traces;
  std::vector<int> trace_ids;
  for (int v : futures.video_ids) {
    traces.push_back(lm.model->uncertainty_trace(ds.videos[static_cast<size_t>(v)], F));
    trace_ids.push_back(v);
  }
  UncertaintyReport uncertainty =
      uncertainty_report(traces, trace_ids, ds.bounces ? &*ds.bounces : nullptr, F);

  emit_reports(&metrics, diversity ? &*diversity : nullptr, &uncertainty, out_dir);
  std::cout << "status=ok videos=" << futures.video_ids.size() << " K=" << K
            << " avg_ssim=" << format_double(metrics.avg_ssim)
            << " avg_psnr=" << format_double(metrics.avg_psnr)
            << " sign_test_p=" << format_double(uncertainty.sign_test_p) << " out=" << out_dir
            << "\n";
  return kExitOk;
}

const std::vector<std::string>& report_keys() {
  static const std::vector<std::string> keys = {"in_dir", "out_dir"};
  return keys;
}

int cmd_report(const CommonOpts& opts) {
  Config cfg = build_config(opts, report_keys());
  if (!opts.dump_config.empty()) {
    Config defaults;
    defaults.set("in_dir", cfg.get_str("in_dir", "eval_out"));
    defaults.set("out_dir", cfg.get_str("out_dir", "eval_out"));
    defaults.save(opts.dump_config);
    std::cout << "status=ok dumped=" << opts.dump_config << "\n";
    return kExitOk;
  }
  std::string in_dir = cfg.get_str("in_dir", "eval_out");
  std::string out_dir = cfg.get_str("out_dir", in_dir);
  render_report_plots(in_dir, out_dir);
  int plots = 0;
  for (const char* name : {"bestofk_curve.ppm", "intra_ssim_curve.ppm", "uncertainty_trace.ppm"})
    if (fs::exists(fs::path(out_dir) / name)) ++plots;
  std::cout << "status=ok plots=" << plots << " out=" << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic video prediction with hierarchical predictive-precision weighting"};
  app.require_subcommand(1);

  CommonOpts mk_opts, train_opts, gen_opts, eval_opts, report_opts;
  CLI::App* mk = app.add_subcommand("make-data", "Synthesize a bouncing-digit video dataset. " +
                                                     keys_help(make_data_keys()));
  add_common(mk, mk_opts);
  CLI::App* tr = app.add_subcommand(
      "train", "Train a model variant (nuq | fixed), optionally with the sequence GAN. " +
                   keys_help(TrainConfig::config_keys()));
  add_common(tr, train_opts);
  CLI::App* gen = app.add_subcommand(
      "generate", "Generate futures from a checkpoint. " + keys_help(generate_keys()));
  add_common(gen, gen_opts);
  CLI::App* ev = app.add_subcommand(
      "eval", "Best-of-K evaluation, diversity and uncertainty reports. " + keys_help(eval_keys()));
  add_common(ev, eval_opts);
  CLI::App* rp = app.add_subcommand(
      "report", "Render plot images from emitted report files. " + keys_help(report_keys()));
  add_common(rp, report_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (mk->parsed()) return cmd_make_data(mk_opts);
    if (tr->parsed()) return cmd_train(train_opts);
    if (gen->parsed()) return cmd_generate(gen_opts);
    if (ev->parsed()) return cmd_eval(eval_opts);
    if (rp->parsed()) return cmd_report(report_opts);
  } catch (const ConfigError& e) {
    std::cerr << "status=config_error msg=\"" << e.what() << "\"\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "status=runtime_error msg=\"" << e.what() << "\"\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
