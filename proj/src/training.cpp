#include "nuq/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nuq/errors.hpp"
#include "nuq/evaluation.hpp"

namespace fs = std::filesystem;

namespace nuq {

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

// Seed-path tags for the independent training streams.
enum : uint64_t { kSeedData = 0xDA7A, kSeedNoise = 0x4015E, kSeedWindows = 0x3100, kSeedVal = 0x7A1 };

}  // namespace

const std::vector<std::string>& TrainConfig::config_keys() {
  static const std::vector<std::string> keys = {
      "variant",      "gan",          "eta1",        "eta2",       "gamma",
      "k",            "lr",           "batch_size",  "epochs",     "F",
      "train_len",    "predict_len",  "g",           "hyperprior", "hyper_shape",
      "hyper_rate",   "seed",         "ckpt_dir",    "log_path",   "data_dir",
      "val_dir",      "clip",         "levels",      "base_width", "hidden",
      "var_hidden",   "smin",         "logvar_clamp", "beta_floor", "detach_sigma",
      "canvas",       "val_videos",   "val_futures", "patience",   "disc_base_width",
      "disc_feat"};
  return keys;
}

const std::vector<std::string>& TrainConfig::compat_keys() {
  // Everything that shapes the parameter vector or the training trajectory;
  // epochs, patience and file paths may change across a resume.
  static const std::vector<std::string> keys = {
      "variant",    "gan",         "eta1",        "eta2",        "gamma",
      "k",          "lr",          "batch_size",  "F",           "train_len",
      "predict_len", "g",          "hyperprior",  "hyper_shape", "hyper_rate",
      "seed",       "clip",        "levels",      "base_width",  "hidden",
      "var_hidden", "smin",        "logvar_clamp", "beta_floor", "detach_sigma",
      "canvas",     "val_videos",  "val_futures", "disc_base_width", "disc_feat"};
  return keys;
}

TrainConfig TrainConfig::from_config(const Config& c) {
  c.check_known_keys(config_keys());
  TrainConfig t;
  t.variant = c.get_str("variant", t.variant);
  t.gan = c.get_bool("gan", t.gan);
  t.eta1 = c.get_double("eta1", t.eta1);
  t.eta2 = c.get_double("eta2", t.eta2);
  t.gamma = c.get_double("gamma", t.gamma);
  t.k = static_cast<int>(c.get_int("k", t.k));
  t.lr = c.get_double("lr", t.lr);
  t.batch_size = static_cast<int>(c.get_int("batch_size", t.batch_size));
  t.epochs = static_cast<int>(c.get_int("epochs", t.epochs));
  t.F = static_cast<int>(c.get_int("F", t.F));
  t.train_len = static_cast<int>(c.get_int("train_len", t.train_len));
  t.predict_len = static_cast<int>(c.get_int("predict_len", t.predict_len));
  t.g = static_cast<int>(c.get_int("g", t.g));
  t.hyperprior = c.get_str("hyperprior", t.hyperprior);
  t.hyper_shape = c.get_double("hyper_shape", t.hyper_shape);
  t.hyper_rate = c.get_double("hyper_rate", t.hyper_rate);
  t.seed = c.get_u64("seed", t.seed);
  t.ckpt_dir = c.get_str("ckpt_dir", t.ckpt_dir);
  t.log_path = c.get_str("log_path", t.log_path);
  t.data_dir = c.get_str("data_dir", t.data_dir);
  t.val_dir = c.get_str("val_dir", t.val_dir);
  t.clip = c.get_double("clip", t.clip);
  t.levels = static_cast<int>(c.get_int("levels", t.levels));
  t.base_width = static_cast<int>(c.get_int("base_width", t.base_width));
  t.hidden = static_cast<int>(c.get_int("hidden", t.hidden));
  t.var_hidden = static_cast<int>(c.get_int("var_hidden", t.var_hidden));
  t.smin = c.get_double("smin", t.smin);
  t.logvar_clamp = c.get_double("logvar_clamp", t.logvar_clamp);
  t.beta_floor = c.get_double("beta_floor", t.beta_floor);
  t.detach_sigma = c.get_bool("detach_sigma", t.detach_sigma);
  t.canvas = static_cast<int>(c.get_int("canvas", t.canvas));
  t.val_videos = static_cast<int>(c.get_int("val_videos", t.val_videos));
  t.val_futures = static_cast<int>(c.get_int("val_futures", t.val_futures));
  t.patience = static_cast<int>(c.get_int("patience", t.patience));
  t.disc_base_width = static_cast<int>(c.get_int("disc_base_width", t.disc_base_width));
  t.disc_feat = static_cast<int>(c.get_int("disc_feat", t.disc_feat));
  t.validate();
  return t;
}

Config TrainConfig::to_config() const {
  Config c;
  c.set("variant", variant);
  c.set("gan", bool_str(gan));
  c.set("eta1", format_double(eta1));
  c.set("eta2", format_double(eta2));
  c.set("gamma", format_double(gamma));
  c.set("k", std::to_string(k));
  c.set("lr", format_double(lr));
  c.set("batch_size", std::to_string(batch_size));
  c.set("epochs", std::to_string(epochs));
  c.set("F", std::to_string(F));
  c.set("train_len", std::to_string(train_len));
  c.set("predict_len", std::to_string(predict_len));
  c.set("g", std::to_string(g));
  c.set("hyperprior", hyperprior);
  c.set("hyper_shape", format_double(hyper_shape));
  c.set("hyper_rate", format_double(hyper_rate));
  c.set("seed", std::to_string(seed));
  c.set("ckpt_dir", ckpt_dir);
  c.set("log_path", log_path);
  c.set("data_dir", data_dir);
  c.set("val_dir", val_dir);
  c.set("clip", format_double(clip));
  c.set("levels", std::to_string(levels));
  c.set("base_width", std::to_string(base_width));
  c.set("hidden", std::to_string(hidden));
  c.set("var_hidden", std::to_string(var_hidden));
  c.set("smin", format_double(smin));
  c.set("logvar_clamp", format_double(logvar_clamp));
  c.set("beta_floor", format_double(beta_floor));
  c.set("detach_sigma", bool_str(detach_sigma));
  c.set("canvas", std::to_string(canvas));
  c.set("val_videos", std::to_string(val_videos));
  c.set("val_futures", std::to_string(val_futures));
  c.set("patience", std::to_string(patience));
  c.set("disc_base_width", std::to_string(disc_base_width));
  c.set("disc_feat", std::to_string(disc_feat));
  return c;
}

void TrainConfig::validate() const {
  variant_from_string(variant);
  if (eta1 < 0 || eta2 < 0 || gamma < 0)
    throw ConfigError("TrainConfig: eta1, eta2, gamma must be >= 0");
  if (!(lr > 0)) throw ConfigError("TrainConfig: lr must be > 0");
  if (F < 1) throw ConfigError("TrainConfig: F must be >= 1");
  if (train_len <= F) throw ConfigError("TrainConfig: train_len must exceed F");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
  if (gan && train_len - F < k)
    throw ConfigError("TrainConfig: gan needs train_len - F >= k generated frames");
  if (hyperprior != "gamma" && hyperprior != "uniform")
    throw ConfigError("TrainConfig: hyperprior must be gamma | uniform");
  model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.canvas = canvas;
  m.levels = levels;
  m.base_width = base_width;
  m.g = g;
  m.hidden = hidden;
  m.var_hidden = var_hidden;
  m.smin = smin;
  m.logvar_clamp = logvar_clamp;
  m.beta_floor = beta_floor;
  m.detach_sigma = detach_sigma;
  return m;
}

DiscConfig TrainConfig::disc_config() const {
  DiscConfig d;
  d.canvas = canvas;
  d.levels = levels;
  d.base_width = disc_base_width;
  d.feat = disc_feat;
  d.hidden = hidden;
  d.k = k;
  return d;
}

HyperpriorConfig TrainConfig::hyperprior_config() const {
  return HyperpriorConfig::from_strings(hyperprior, hyper_shape, hyper_rate);
}

// ---------------------------------------------------------------------------
// run log
// ---------------------------------------------------------------------------

void RunLog::open(const std::string& path, const std::string& config_echo, uint64_t seed,
                  bool append) {
  if (path.empty()) return;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  file_ = std::make_unique<std::ofstream>(path, append ? std::ios::app : std::ios::out);
  if (!*file_) throw ConfigError("RunLog: cannot open " + path);
  std::string one_line = config_echo;
  for (char& c : one_line)
    if (c == '\n') c = ';';
  *file_ << "# seed=" << seed << "\n";
  *file_ << "# config=" << one_line << "\n";
  *file_ << "step,epoch,kind,total,recon,neg_log_prec,kl_latent,kl_hyper,adv,val_ssim,val_psnr,"
            "wall_ms\n";
}

void RunLog::log_step(int64_t step, int epoch, const LossBreakdown& loss, double wall_ms) {
  step_totals_.push_back(loss.total);
  if (!file_) return;
  *file_ << step << "," << epoch << ",step," << format_double(loss.total) << ","
         << format_double(loss.weighted_recon) << "," << format_double(loss.neg_log_precision)
         << "," << format_double(loss.kl_latent) << "," << format_double(loss.kl_hyper) << ","
         << format_double(loss.adv) << ",,," << format_double(wall_ms) << "\n";
  file_->flush();
}

void RunLog::log_val(int64_t step, int epoch, double val_ssim, double val_psnr, double wall_ms) {
  if (!file_) return;
  *file_ << step << "," << epoch << ",val,,,,,,," << format_double(val_ssim) << ","
         << format_double(val_psnr) << "," << format_double(wall_ms) << "\n";
  file_->flush();
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

CheckpointData build_checkpoint(const TrainConfig& cfg, NuqModel& model, const Adam* opt,
                                SeqDiscriminator* disc, const Adam* disc_opt, int epoch,
                                double best_val, int best_epoch) {
  CheckpointData ckpt;
  ckpt.config_echo = cfg.to_config().serialize();
  for (auto& [name, p] : model.params().items) ckpt.blobs.emplace_back(name, p.value());
  for (auto& [name, t] : model.buffers().items) ckpt.blobs.emplace_back(name, *t);
  if (opt) {
    for (size_t i = 0; i < model.params().items.size(); ++i) {
      ckpt.blobs.emplace_back("opt/m/" + model.params().items[i].first, opt->m()[i]);
      ckpt.blobs.emplace_back("opt/v/" + model.params().items[i].first, opt->v()[i]);
    }
    ckpt.blobs.emplace_back("opt/t", Tensor::scalar(static_cast<double>(opt->step_count())));
  }
  if (disc) {
    for (auto& [name, p] : disc->params().items) ckpt.blobs.emplace_back(name, p.value());
    for (auto& [name, t] : disc->buffers().items) ckpt.blobs.emplace_back(name, *t);
    if (disc_opt) {
      for (size_t i = 0; i < disc->params().items.size(); ++i) {
        ckpt.blobs.emplace_back("opt_disc/m/" + disc->params().items[i].first, disc_opt->m()[i]);
        ckpt.blobs.emplace_back("opt_disc/v/" + disc->params().items[i].first, disc_opt->v()[i]);
      }
      ckpt.blobs.emplace_back("opt_disc/t",
                              Tensor::scalar(static_cast<double>(disc_opt->step_count())));
    }
  }
  ckpt.blobs.emplace_back("train/epoch", Tensor::scalar(static_cast<double>(epoch)));
  ckpt.blobs.emplace_back("train/best_val", Tensor::scalar(best_val));
  ckpt.blobs.emplace_back("train/best_epoch", Tensor::scalar(static_cast<double>(best_epoch)));
  return ckpt;
}

namespace {

void restore_named(const CheckpointData& ckpt, const std::string& name, Tensor& dst) {
  const Tensor* src = ckpt.find(name);
  if (!src) throw FormatError("checkpoint: missing blob '" + name + "'");
  if (!src->same_shape(dst))
    throw FormatError("checkpoint: shape mismatch for '" + name + "' (" + src->shape_str() +
                      " vs " + dst.shape_str() + ")");
  dst = *src;
}

}  // namespace

void load_model_from_checkpoint(const CheckpointData& ckpt, NuqModel& model,
                                SeqDiscriminator* disc) {
  for (auto& [name, p] : model.params().items) restore_named(ckpt, name, p.value_mut());
  for (auto& [name, t] : model.buffers().items) restore_named(ckpt, name, *t);
  if (disc) {
    if (!ckpt.has_prefix("disc/"))
      throw FormatError(
          "checkpoint: missing 'disc/' parameter namespace (checkpoint was saved without the "
          "discriminator)");
    for (auto& [name, p] : disc->params().items) restore_named(ckpt, name, p.value_mut());
    for (auto& [name, t] : disc->buffers().items) restore_named(ckpt, name, *t);
  }
}

LoadedModel load_model(const std::string& checkpoint_path) {
  CheckpointData ckpt = read_checkpoint(checkpoint_path);
  LoadedModel lm;
  lm.cfg = TrainConfig::from_config(Config::parse(ckpt.config_echo));
  lm.model = std::make_unique<NuqModel>(lm.cfg.model_config(), lm.cfg.seed);
  if (lm.cfg.gan && ckpt.has_prefix("disc/"))
    lm.disc = std::make_unique<SeqDiscriminator>(lm.cfg.disc_config(), lm.cfg.seed);
  load_model_from_checkpoint(ckpt, *lm.model, lm.disc.get());
  return lm;
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

std::pair<double, double> validate(NuqModel& model, const VideoDataset& val_ds,
                                   const TrainConfig& cfg) {
  int steps = std::min(cfg.predict_len, val_ds.seq_len - cfg.F);
  MetricReport report =
      best_of_k_eval(model, val_ds, cfg.val_futures, cfg.F, steps,
                     derive_seed(cfg.seed, {kSeedVal}), SelectBy::kSsim, cfg.val_videos);
  return {report.avg_ssim, report.avg_psnr};
}

// ---------------------------------------------------------------------------
// training drive
// ---------------------------------------------------------------------------

namespace {

struct TrainState {
  std::unique_ptr<NuqModel> model;
  std::unique_ptr<Adam> opt;
  std::unique_ptr<SeqDiscriminator> disc;
  std::unique_ptr<Adam> disc_opt;
};

TrainResult run_loop(const TrainConfig& cfg, const VideoDataset& train_ds,
                     const VideoDataset& val_ds, TrainState& st, int start_epoch,
                     double best_val_in, int best_epoch_in, bool append_log,
                     const TrainHooks* hooks = nullptr) {
  if (train_ds.num_videos() < 1) throw ConfigError("train_run: empty training dataset");
  if (cfg.train_len > train_ds.seq_len)
    throw ConfigError("train_run: train_len exceeds dataset sequence length");
  Variant variant = variant_from_string(cfg.variant);
  HyperpriorConfig hyper = cfg.hyperprior_config();

  fs::create_directories(cfg.ckpt_dir);
  RunLog log;
  log.open(cfg.log_path, cfg.to_config().serialize(), cfg.seed, append_log);

  TrainResult result;
  result.best_val_ssim = best_val_in;
  result.best_epoch = best_epoch_in;
  auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&]() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  auto save_ckpt = [&](const std::string& name, int epoch) {
    std::string path = (fs::path(cfg.ckpt_dir) / name).string();
    write_checkpoint(path, build_checkpoint(cfg, *st.model, st.opt.get(), st.disc.get(),
                                            st.disc_opt.get(), epoch, result.best_val_ssim,
                                            result.best_epoch));
    return path;
  };

  int64_t step = static_cast<int64_t>(st.opt->step_count());
  int no_improve = 0;

  for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    BatchIterator it = batch_iter(train_ds, cfg.batch_size, cfg.F, cfg.train_len,
                                  derive_seed(cfg.seed, {kSeedData, static_cast<uint64_t>(epoch)}));
    int batch_index = 0;
    while (auto batch = it.next()) {
      uint64_t noise_seed =
          derive_seed(cfg.seed, {kSeedNoise, static_cast<uint64_t>(epoch),
                                 static_cast<uint64_t>(batch_index)});
      TrainRollout rollout;
      LossResult loss;
      try {
        rollout =
            st.model->rollout_train(batch->frames, cfg.F, noise_seed, variant, /*training=*/true);
        loss = variant == Variant::kNuq ? nuq_loss(rollout, cfg.eta1, cfg.eta2, hyper)
                                        : fixed_precision_loss(rollout, cfg.eta1);
      } catch (const DomainError& e) {
        // Numeric breakdown mid-rollout; the bad update was never applied, so
        // the current parameters are the last good state.
        std::string path = save_ckpt("ckpt_abort.bin", epoch);
        throw NumericError(std::string("training step failed at step ") + std::to_string(step) +
                           ": " + e.what() + "; last-good checkpoint: " + path);
      }

      Var objective = loss.total;
      std::vector<FrameWindow> real_windows;
      std::vector<Var> fake_frames;
      if (cfg.gan) {
        uint64_t win_seed = derive_seed(cfg.seed, {kSeedWindows, static_cast<uint64_t>(epoch),
                                                   static_cast<uint64_t>(batch_index)});
        real_windows = sample_real_windows(*batch, cfg.k, win_seed);
        // Fake windows come from the generated frames only (t > F), one per
        // batch row, never straddling the context boundary.
        int P = static_cast<int>(rollout.steps.size());
        Rng wrng(derive_seed(win_seed, {0xFA4E}));
        int start = P == cfg.k
                        ? 0
                        : static_cast<int>(wrng.next_below(static_cast<uint64_t>(P - cfg.k + 1)));
        for (int t = 0; t < cfg.k; ++t) fake_frames.push_back(rollout.steps[start + t].xhat);
        Var real_scores = st.disc->score_frames(windows_to_frames(real_windows), true);
        Var fake_scores = st.disc->score_frames(fake_frames, true);
        GanLossResult gl = gan_losses(real_scores, fake_scores);
        loss.breakdown.adv = gl.disc_loss_value;
        loss.breakdown.gamma_adv = cfg.gamma;
        objective = sub(objective, mul_scalar(gl.disc_loss, cfg.gamma));
        loss.breakdown.total = objective.value()[0];
      }

      if (!std::isfinite(loss.breakdown.total)) {
        std::string path = save_ckpt("ckpt_abort.bin", epoch);
        std::ostringstream diag;
        diag << "non-finite loss at step " << step << " (epoch " << epoch << "); per-step traces:";
        for (size_t t = 0; t < loss.breakdown.per_t_recon.size(); ++t) {
          diag << " t" << t << "[recon=" << loss.breakdown.per_t_recon[t]
               << " nlp=" << loss.breakdown.per_t_neg_log_precision[t]
               << " klz=" << loss.breakdown.per_t_kl_latent[t]
               << " kls=" << loss.breakdown.per_t_kl_hyper[t] << "]";
        }
        diag << "; last-good checkpoint: " << path;
        throw NumericError(diag.str());
      }

      // Generator step: updates theta/phi/psi/lambda only.
      if (hooks && hooks->before_generator_step) hooks->before_generator_step();
      st.opt->zero_grad();
      if (st.disc_opt) st.disc_opt->zero_grad();
      backward(objective);
      st.opt->step(cfg.clip);
      if (hooks && hooks->after_generator_step) hooks->after_generator_step();
      ++step;
      log.log_step(step, epoch, loss.breakdown, wall_ms());
      result.step_losses.push_back(loss.breakdown.total);
      result.step_breakdowns.push_back(loss.breakdown);

      if (cfg.gan) {
        // Discriminator step on detached fakes: updates w only.
        std::vector<Var> detached;
        for (const Var& f : fake_frames) detached.push_back(constant(f.value()));
        Var real_scores = st.disc->score_frames(windows_to_frames(real_windows), true);
        Var fake_scores = st.disc->score_frames(detached, true);
        GanLossResult gl = gan_losses(real_scores, fake_scores);
        if (hooks && hooks->before_disc_step) hooks->before_disc_step();
        st.disc_opt->zero_grad();
        st.opt->zero_grad();
        backward(gl.disc_loss);
        st.disc_opt->step(cfg.clip);
        if (hooks && hooks->after_disc_step) hooks->after_disc_step();
      }
      ++batch_index;
    }

    auto [val_ssim, val_psnr] = validate(*st.model, val_ds, cfg);
    log.log_val(step, epoch, val_ssim, val_psnr, wall_ms());
    result.epoch_val_ssim.push_back(val_ssim);
    result.epoch_val_psnr.push_back(val_psnr);
    result.epochs_run = epoch;

    if (val_ssim > result.best_val_ssim) {
      result.best_val_ssim = val_ssim;
      result.best_epoch = epoch;
      result.best_checkpoint = save_ckpt("ckpt_best.bin", epoch);
      no_improve = 0;
    } else {
      ++no_improve;
    }
    if (epoch == 1) save_ckpt("ckpt_epoch1.bin", epoch);
    if (epoch == 5) save_ckpt("ckpt_epoch5.bin", epoch);
    result.last_checkpoint = save_ckpt("ckpt_last.bin", epoch);

    if (cfg.patience > 0 && no_improve >= cfg.patience) break;
  }

  if (cfg.epochs == 0) {
    // Validation-only pass; no checkpoint by contract.
    auto [val_ssim, val_psnr] = validate(*st.model, val_ds, cfg);
    log.log_val(step, 0, val_ssim, val_psnr, wall_ms());
    result.epoch_val_ssim.push_back(val_ssim);
    result.epoch_val_psnr.push_back(val_psnr);
  }
  return result;
}

TrainState make_state(const TrainConfig& cfg) {
  TrainState st;
  st.model = std::make_unique<NuqModel>(cfg.model_config(), cfg.seed);
  st.opt = std::make_unique<Adam>(st.model->parameter_vars(), cfg.lr);
  if (cfg.gan) {
    st.disc = std::make_unique<SeqDiscriminator>(cfg.disc_config(), cfg.seed);
    st.disc_opt = std::make_unique<Adam>(st.disc->parameter_vars(), cfg.lr);
  }
  return st;
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, const VideoDataset& train_ds,
                      const VideoDataset& val_ds, const TrainHooks* hooks) {
  cfg.validate();
  TrainState st = make_state(cfg);
  return run_loop(cfg, train_ds, val_ds, st, 1, -2.0, 0, /*append_log=*/false, hooks);
}

TrainResult resume(const std::string& checkpoint_path, const TrainConfig& cfg,
                   const VideoDataset& train_ds, const VideoDataset& val_ds) {
  cfg.validate();
  CheckpointData ckpt = read_checkpoint(checkpoint_path);
  Config saved = Config::parse(ckpt.config_echo);
  Config current = cfg.to_config();
  std::vector<std::string> diffs;
  for (const std::string& key : TrainConfig::compat_keys()) {
    std::string a = saved.get_str(key, "<absent>");
    std::string b = current.get_str(key, "<absent>");
    if (a != b) diffs.push_back(key + ": checkpoint=" + a + " requested=" + b);
  }
  if (!diffs.empty()) {
    std::string msg = "resume: config mismatch:";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw ConfigError(msg);
  }

  TrainState st = make_state(cfg);
  load_model_from_checkpoint(ckpt, *st.model, st.disc.get());

  // Optimizer state.
  std::vector<Tensor> m, v;
  for (auto& [name, p] : st.model->params().items) {
    const Tensor* bm = ckpt.find("opt/m/" + name);
    const Tensor* bv = ckpt.find("opt/v/" + name);
    if (!bm || !bv) throw FormatError("resume: missing optimizer state for '" + name + "'");
    m.push_back(*bm);
    v.push_back(*bv);
  }
  const Tensor* t_blob = ckpt.find("opt/t");
  if (!t_blob) throw FormatError("resume: missing optimizer step counter");
  st.opt->restore(std::move(m), std::move(v), static_cast<int64_t>((*t_blob)[0]));
  if (cfg.gan) {
    std::vector<Tensor> dm, dv;
    for (auto& [name, p] : st.disc->params().items) {
      const Tensor* bm = ckpt.find("opt_disc/m/" + name);
      const Tensor* bv = ckpt.find("opt_disc/v/" + name);
      if (!bm || !bv)
        throw FormatError("resume: missing discriminator optimizer state for '" + name + "'");
      dm.push_back(*bm);
      dv.push_back(*bv);
    }
    const Tensor* dt = ckpt.find("opt_disc/t");
    if (!dt) throw FormatError("resume: missing discriminator optimizer step counter");
    st.disc_opt->restore(std::move(dm), std::move(dv), static_cast<int64_t>((*dt)[0]));
  }

  const Tensor* epoch_blob = ckpt.find("train/epoch");
  if (!epoch_blob) throw FormatError("resume: missing train/epoch");
  int saved_epoch = static_cast<int>((*epoch_blob)[0]);
  double best_val = -2.0;
  int best_epoch = 0;
  if (const Tensor* b = ckpt.find("train/best_val")) best_val = (*b)[0];
  if (const Tensor* b = ckpt.find("train/best_epoch")) best_epoch = static_cast<int>((*b)[0]);

  return run_loop(cfg, train_ds, val_ds, st, saved_epoch + 1, best_val, best_epoch,
                  /*append_log=*/true);
}

}  // namespace nuq
