#pragma once

#include "vrdone/json_fields.hpp"
#include "vrdone/loss.hpp"
#include "vrdone/model_config.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace vrdone {

using ConfigError = detail::ConfigError;

struct OptimConfig {
  double lr = 2e-4;
  double min_lr = 2e-5;  // end of the cosine schedule
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_fraction = 0.05;  // of total steps, used when warmup_steps < 0
  long warmup_steps = -1;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  double ema_decay = 0.999;
  /// Ramp the EMA decay as min(decay, (1 + step) / (10 + step)).
  bool ema_warmup = false;

  void validate() const;
};

struct DataConfig {
  std::string train_dir;
  std::string val_dir;  // optional; evaluated with the EMA weights after training
  int max_len = 512;
  int batch_size = 48;
  int epochs = 10;
  long max_steps = 0;  // 0: run all epochs
  double conf_thresh = 0.4;
  int topk_predicates = 6;
  int topk_video = 200;

  void validate() const;
};

struct OutputConfig {
  std::string dir = "runs/default";
  int checkpoint_every = 1;  // epochs; 0 keeps only the final checkpoint
  int log_every = 1;         // steps
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  OptimConfig optim;
  DataConfig data;
  OutputConfig output;
  std::uint64_t seed = 0;

  /// Validates every section; throws ConfigError naming the field.
  void validate() const;
};

void to_json(nlohmann::json& j, const OptimConfig& c);
void from_json(const nlohmann::json& j, OptimConfig& c);
void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void to_json(nlohmann::json& j, const OutputConfig& c);
void from_json(const nlohmann::json& j, OutputConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses and validates; relative data/output paths resolve against the config's directory.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace vrdone
