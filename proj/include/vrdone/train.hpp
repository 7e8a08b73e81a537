#pragma once

#include "vrdone/config.hpp"
#include "vrdone/data.hpp"
#include "vrdone/detector.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

namespace vrdone {

/// Linear warmup from 0, then cosine from lr down to min_lr at `total` steps.
class LrSchedule {
 public:
  LrSchedule(const OptimConfig& cfg, long total_steps);
  double operator()(long step) const;
  long warmup() const { return warmup_; }
  long total() const { return total_; }

 private:
  double lr_, min_lr_;
  long warmup_, total_;
};

/// Adam with decoupled weight decay on parameters flagged for decay.
class AdamW {
 public:
  AdamW(nn::ParameterStore& store, const OptimConfig& cfg);
  /// Applies one update with learning rate `lr` from the current gradients.
  void step(double lr);
  long steps() const { return t_; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  nn::ParameterStore& store_;
  OptimConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

/// Exponential moving average of parameter values.
class Ema {
 public:
  Ema(const nn::ParameterStore& store, double decay, bool warmup);
  void update(const nn::ParameterStore& store, long step);
  /// Writes the shadow values into `store`.
  void copy_to(nn::ParameterStore& store) const;
  std::vector<Matrix>& shadow() { return shadow_; }
  const std::vector<Matrix>& shadow() const { return shadow_; }
  double decay_at(long step) const;

 private:
  std::vector<Matrix> shadow_;
  double decay_;
  bool warmup_;
};

/// Scales all gradients so their global L2 norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(nn::ParameterStore& store, double max_norm);

struct StepLog {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double cls = 0.0;
  double focal = 0.0;
  double dice = 0.0;
  double grad_norm = 0.0;
};

/// Training pairs for `epoch`, in batch order. Crops and order depend only on (seed, epoch).
std::vector<PairSample> epoch_pairs(const Dataset& data, const RunConfig& cfg, int epoch);

class Trainer {
 public:
  Trainer(RunConfig cfg, Dataset train);

  /// Restores parameters, EMA, optimizer moments and step counter.
  void resume(const std::filesystem::path& checkpoint);
  /// Trains until the schedule ends, or until `stop_at` steps when positive.
  /// Calls `on_step` after every update.
  void run(long stop_at = 0, const std::function<void(const StepLog&)>& on_step = {});
  /// One optimisation step on `batch`; exposed for tests.
  StepLog train_step(const std::vector<PairSample>& batch, int epoch);

  void save_checkpoint(const std::filesystem::path& path) const;

  VrdModel& model() { return *model_; }
  const Ema& ema() const { return ema_; }
  /// Model carrying the EMA weights.
  std::unique_ptr<VrdModel> ema_model() const;
  long step() const { return step_; }
  long total_steps() const { return schedule_.total(); }
  const LrSchedule& schedule() const { return schedule_; }
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  Dataset data_;
  std::vector<long> epoch_batches_;
  std::unique_ptr<VrdModel> model_;
  AdamW opt_;
  Ema ema_;
  LrSchedule schedule_;
  long step_ = 0;
};

/// Checkpoint files: `<path>` holds the binary archive, `<path>.json` the config snapshot.
struct CheckpointMeta {
  int schema_version = 1;
  long step = 0;
  RunConfig config;
};

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);
/// Builds the model from the snapshot and loads EMA weights (or raw weights).
std::unique_ptr<VrdModel> load_model(const std::filesystem::path& path, bool use_ema = true);

}  // namespace vrdone
