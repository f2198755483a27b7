#pragma once

// L2 regression training with SGD momentum and a cosine learning-rate decay.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mret/model.hpp"

namespace mret {

struct TrainConfig {
  double base_lr = 0.003;  // published schedule starts at 0.3 with batch 256 and pretrained weights
  double momentum = 0.9;
  int batch_size = 8;
  int epochs = 10;
  std::uint64_t seed = 0;
  bool deterministic = true;
  bool mos_normalization = false;  // regress (mos - lo) / (hi - lo) instead of raw mos
  double mos_lo = 0.0;
  double mos_hi = 100.0;
  double clip_grad_norm = 0.0;  // 0 disables global-norm clipping

  void validate() const;
  int steps_per_epoch(std::size_t dataset_size) const;
  int total_steps(std::size_t dataset_size) const;
  double to_target(double mos) const;
  double to_mos(double prediction) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LabeledVideo {
  std::string name;
  FrameSequence video;
  double mos = 0.0;
};

/// Mean of squared differences. Throws on empty or mismatched batches.
double l2_loss(std::span<const double> predictions, std::span<const double> labels);

/// 0.5 * base * (1 + cos(pi * step / total)).
double cosine_lr(std::int64_t step, std::int64_t total_steps, double base);

struct OptState {
  TensorMap velocity;
  std::int64_t step = 0;
};

/// Classical momentum: v <- momentum * v + g; theta <- theta - lr * v.
/// Throws NumericsError naming the tensor when a gradient or the updated
/// value is non-finite; in that case nothing is updated.
void sgd_step(ModelParams& params, const GradMap& grads, OptState& state, double lr, double momentum);

struct HistoryRow {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_srcc;
  std::optional<double> val_plcc;
};

/// CSV with header epoch,step,lr,train_loss,val_srcc,val_plcc; validation
/// columns are filled on the last step of each epoch and empty elsewhere.
std::string history_csv(const std::vector<HistoryRow>& rows);

struct TrainOptions {
  SamplerMode sampler = SamplerMode::mret;
  FrameStrategy strategy = FrameStrategy::uniform;
  const ModelParams* initial = nullptr;  // defaults to init_random(cfg, seed)
  std::function<void(const HistoryRow&)> on_step;
};

struct TrainResult {
  ModelParams params;       // last good parameters
  ModelParams best_params;  // parameters at the best validation epoch
  OptState opt;
  OptState best_opt;
  std::vector<HistoryRow> history;
  int best_epoch = 0;
  std::optional<double> best_srcc;
  bool diverged = false;
  std::string divergence_message;
};

TrainResult train_loop(const std::vector<LabeledVideo>& train_set, const std::vector<LabeledVideo>& val_set,
                       const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainOptions& opts = {});

struct EvalResult {
  std::vector<double> predictions;  // in MOS units
  std::vector<double> labels;
  std::optional<double> srcc;
  std::optional<double> plcc;
};

/// Inference-mode scores for every video; correlations are empty when undefined.
EvalResult evaluate(const std::vector<LabeledVideo>& videos, const ModelParams& params, const ModelConfig& mcfg,
                    const TrainConfig& tcfg, const ClipOptions& clip = {});

}  // namespace mret
