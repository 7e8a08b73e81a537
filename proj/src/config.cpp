#include "vrdone/config.hpp"

#include <fstream>

namespace vrdone {

namespace fs = std::filesystem;
using detail::read_optional;
using detail::reject_unknown;

void OptimConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("optim." + m); };
  if (!(lr > 0)) fail("lr must be positive");
  if (!(min_lr >= 0) || min_lr > lr) fail("min_lr must lie in [0, lr]");
  if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) fail("beta2 must lie in [0, 1)");
  if (!(eps > 0)) fail("eps must be positive");
  if (!(warmup_fraction >= 0 && warmup_fraction <= 1)) fail("warmup_fraction must lie in [0, 1]");
  if (!(grad_clip >= 0)) fail("grad_clip must be >= 0");
  if (!(ema_decay >= 0 && ema_decay <= 1)) fail("ema_decay must lie in [0, 1]");
}

void DataConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("data." + m); };
  if (train_dir.empty()) fail("train_dir: missing field");
  if (max_len < 1) fail("max_len must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (epochs < 1) fail("epochs must be positive");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (!(conf_thresh >= 0 && conf_thresh <= 1)) fail("conf_thresh must lie in [0, 1]");
  if (topk_predicates < 1) fail("topk_predicates must be positive");
  if (topk_video < 1) fail("topk_video must be positive");
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  optim.validate();
  data.validate();
  if (output.dir.empty()) throw ConfigError("output.dir must be non-empty");
  if (output.checkpoint_every < 0) throw ConfigError("output.checkpoint_every must be >= 0");
  if (output.log_every < 1) throw ConfigError("output.log_every must be positive");
  if (data.max_len < model.min_length()) {
    throw ConfigError("data.max_len must be at least " + std::to_string(model.min_length()) +
                      " for " + std::to_string(model.encoder_blocks) + " encoder blocks");
  }
}

void to_json(nlohmann::json& j, const OptimConfig& c) {
  j = {{"lr", c.lr},
       {"min_lr", c.min_lr},
       {"weight_decay", c.weight_decay},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps},
       {"warmup_fraction", c.warmup_fraction},
       {"warmup_steps", c.warmup_steps},
       {"grad_clip", c.grad_clip},
       {"ema_decay", c.ema_decay},
       {"ema_warmup", c.ema_warmup}};
}

void from_json(const nlohmann::json& j, OptimConfig& c) {
  const std::string p = "optim";
  reject_unknown(j,
                 {"lr", "min_lr", "weight_decay", "beta1", "beta2", "eps", "warmup_fraction",
                  "warmup_steps", "grad_clip", "ema_decay", "ema_warmup"},
                 p);
  read_optional(j, "lr", c.lr, p);
  read_optional(j, "min_lr", c.min_lr, p);
  read_optional(j, "weight_decay", c.weight_decay, p);
  read_optional(j, "beta1", c.beta1, p);
  read_optional(j, "beta2", c.beta2, p);
  read_optional(j, "eps", c.eps, p);
  read_optional(j, "warmup_fraction", c.warmup_fraction, p);
  read_optional(j, "warmup_steps", c.warmup_steps, p);
  read_optional(j, "grad_clip", c.grad_clip, p);
  read_optional(j, "ema_decay", c.ema_decay, p);
  read_optional(j, "ema_warmup", c.ema_warmup, p);
}

void to_json(nlohmann::json& j, const DataConfig& c) {
  j = {{"train_dir", c.train_dir},
       {"val_dir", c.val_dir},
       {"max_len", c.max_len},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"conf_thresh", c.conf_thresh},
       {"topk_predicates", c.topk_predicates},
       {"topk_video", c.topk_video}};
}

void from_json(const nlohmann::json& j, DataConfig& c) {
  const std::string p = "data";
  reject_unknown(j,
                 {"train_dir", "val_dir", "max_len", "batch_size", "epochs", "max_steps", "conf_thresh",
                  "topk_predicates", "topk_video"},
                 p);
  read_optional(j, "train_dir", c.train_dir, p);
  read_optional(j, "val_dir", c.val_dir, p);
  read_optional(j, "max_len", c.max_len, p);
  read_optional(j, "batch_size", c.batch_size, p);
  read_optional(j, "epochs", c.epochs, p);
  read_optional(j, "max_steps", c.max_steps, p);
  read_optional(j, "conf_thresh", c.conf_thresh, p);
  read_optional(j, "topk_predicates", c.topk_predicates, p);
  read_optional(j, "topk_video", c.topk_video, p);
}

void to_json(nlohmann::json& j, const OutputConfig& c) {
  j = {{"dir", c.dir}, {"checkpoint_every", c.checkpoint_every}, {"log_every", c.log_every}};
}

void from_json(const nlohmann::json& j, OutputConfig& c) {
  const std::string p = "output";
  reject_unknown(j, {"dir", "checkpoint_every", "log_every"}, p);
  read_optional(j, "dir", c.dir, p);
  read_optional(j, "checkpoint_every", c.checkpoint_every, p);
  read_optional(j, "log_every", c.log_every, p);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"model", c.model}, {"loss", c.loss},     {"optim", c.optim},
       {"data", c.data},   {"output", c.output}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown(j, {"model", "loss", "optim", "data", "output", "seed"}, "config");
  read_optional(j, "model", c.model, "config");
  read_optional(j, "loss", c.loss, "config");
  read_optional(j, "optim", c.optim, "config");
  read_optional(j, "data", c.data, "config");
  read_optional(j, "output", c.output, "config");
  read_optional(j, "seed", c.seed, "config");
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  const fs::path base = path.parent_path();
  auto resolve = [&](std::string& s) {
    if (!s.empty() && fs::path(s).is_relative()) s = (base / s).lexically_normal().string();
  };
  resolve(c.data.train_dir);
  resolve(c.data.val_dir);
  resolve(c.output.dir);
  c.validate();
  return c;
}

}  // namespace vrdone
