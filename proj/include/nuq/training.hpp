#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nuq/checkpoint.hpp"
#include "nuq/config.hpp"
#include "nuq/discriminator.hpp"
#include "nuq/losses.hpp"
#include "nuq/model.hpp"
#include "nuq/smm_data.hpp"

namespace nuq {

struct TrainConfig {
  std::string variant = "nuq";  // nuq | fixed
  bool gan = false;
  double eta1 = 0.0001;
  double eta2 = 0.001;
  double gamma = 0.00001;
  int k = 3;
  double lr = 0.002;
  int batch_size = 16;
  int epochs = 30;
  int F = 5;             // seen frames
  int train_len = 15;    // window length during training (F + predicted)
  int predict_len = 10;  // generation length for validation / test rollouts
  int g = 10;
  std::string hyperprior = "gamma";  // gamma | uniform
  double hyper_shape = 2.0;
  double hyper_rate = 1.0;
  uint64_t seed = 1;
  std::string ckpt_dir = "checkpoints";
  std::string log_path = "run_log.csv";
  std::string data_dir;
  std::string val_dir;
  double clip = 5.0;  // global grad-norm clip; 0 disables
  int levels = 4;
  int base_width = 64;
  int hidden = 256;
  int var_hidden = 32;
  double smin = 1e-3;
  double logvar_clamp = 10.0;
  double beta_floor = 1e-4;
  bool detach_sigma = false;
  int canvas = 48;
  int val_videos = 50;
  int val_futures = 10;
  int patience = 0;  // early stop after this many epochs without val improvement; 0 = off
  int disc_base_width = 16;
  int disc_feat = 64;

  static TrainConfig from_config(const Config& c);
  Config to_config() const;
  void validate() const;
  static const std::vector<std::string>& config_keys();
  /// Keys that must match for a checkpoint to be resumable under this config.
  static const std::vector<std::string>& compat_keys();

  ModelConfig model_config() const;
  DiscConfig disc_config() const;
  HyperpriorConfig hyperprior_config() const;
};

/// Append-only run log: comment header (seed + config echo), then a CSV
/// header row, then one row per optimizer step and per validation pass.
class RunLog {
 public:
  RunLog() = default;
  void open(const std::string& path, const std::string& config_echo, uint64_t seed, bool append);
  void log_step(int64_t step, int epoch, const LossBreakdown& loss, double wall_ms);
  void log_val(int64_t step, int epoch, double val_ssim, double val_psnr, double wall_ms);

  const std::vector<double>& step_totals() const { return step_totals_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::vector<double> step_totals_;
};

/// Optional probes around each optimizer step (used by the alternating-update
/// isolation checks).
struct TrainHooks {
  std::function<void()> before_generator_step;
  std::function<void()> after_generator_step;
  std::function<void()> before_disc_step;
  std::function<void()> after_disc_step;
};

struct TrainResult {
  std::vector<double> epoch_val_ssim;
  std::vector<double> epoch_val_psnr;
  std::vector<double> step_losses;  // chronological optimizer-step totals
  std::vector<LossBreakdown> step_breakdowns;
  std::string last_checkpoint;
  std::string best_checkpoint;
  int epochs_run = 0;
  double best_val_ssim = -2.0;
  int best_epoch = 0;
};

/// Full training drive: per epoch one pass of seeded batches, loss + Adam
/// step (alternating discriminator step when gan is on), per-epoch validation
/// (best-of-N SSIM on a fixed slice), checkpoints at epochs {1, 5, best,
/// last}. Deterministic given (config, datasets, seed).
TrainResult train_run(const TrainConfig& cfg, const VideoDataset& train_ds,
                      const VideoDataset& val_ds, const TrainHooks* hooks = nullptr);

/// Restores parameters, optimizer state and epoch counter from a checkpoint
/// and continues to cfg.epochs. Refuses on config-echo mismatch, listing the
/// differing fields.
TrainResult resume(const std::string& checkpoint_path, const TrainConfig& cfg,
                   const VideoDataset& train_ds, const VideoDataset& val_ds);

/// Serializes model (+optional discriminator) parameters, buffers, optimizer
/// state and progress counters.
CheckpointData build_checkpoint(const TrainConfig& cfg, NuqModel& model, const Adam* opt,
                                SeqDiscriminator* disc, const Adam* disc_opt, int epoch,
                                double best_val, int best_epoch);
void load_model_from_checkpoint(const CheckpointData& ckpt, NuqModel& model,
                                SeqDiscriminator* disc);

/// Builds a model from a checkpoint's config echo (weights restored).
struct LoadedModel {
  TrainConfig cfg;
  std::unique_ptr<NuqModel> model;
  std::unique_ptr<SeqDiscriminator> disc;
};
LoadedModel load_model(const std::string& checkpoint_path);

/// Validation metric used during training: best-of-N SSIM over a fixed slice.
std::pair<double, double> validate(NuqModel& model, const VideoDataset& val_ds,
                                   const TrainConfig& cfg);

}  // namespace nuq
