// Command-line front end: train, infer, eval, synth.
#include "vrdone/config.hpp"
#include "vrdone/infer.hpp"
#include "vrdone/log.hpp"
#include "vrdone/metrics.hpp"
#include "vrdone/synth.hpp"
#include "vrdone/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace vrdone;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  os << text;
  if (!os) throw DataError(path.string() + ": write failed");
}

EvalReport evaluate_predictions(const PredictionSet& preds, const Dataset& gt, const Dataset& tracks,
                                const EvalOptions& opts) {
  TripletsByVideo gt_triplets = ground_truth_triplets(gt);
  // A file without any video entry counts as empty predictions for every video.
  PredictionSet filled = preds;
  if (filled.empty()) {
    for (const auto& v : gt.videos) filled[v.video_id];
  }
  return evaluate(predictions_to_triplets(filled, tracks), gt_triplets, opts);
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  const RunConfig cfg = load_run_config(config_path);
  Dataset data = load_dataset(cfg.data.train_dir);
  log::info("training on {} video(s) from {}", data.videos.size(), cfg.data.train_dir);
  Trainer trainer(cfg, std::move(data));
  if (!resume.empty()) trainer.resume(resume);

  const fs::path out_dir = cfg.output.dir;
  fs::create_directories(out_dir);
  std::ofstream metrics(out_dir / "metrics.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  trainer.run(0, [&](const StepLog& s) {
    metrics << nlohmann::json{{"step", s.step}, {"epoch", s.epoch}, {"lr", s.lr},       {"loss", s.total},
                              {"cls", s.cls},   {"focal", s.focal}, {"dice", s.dice}, {"grad_norm", s.grad_norm}}
                   .dump()
            << '\n';
  });
  const fs::path final_ckpt = out_dir / "final.ckpt";
  trainer.save_checkpoint(final_ckpt);

  if (!cfg.data.val_dir.empty()) {
    const Dataset val = load_dataset(cfg.data.val_dir);
    InferOptions io;
    io.conf_thresh = cfg.data.conf_thresh;
    io.topk_predicates = cfg.data.topk_predicates;
    io.topk_video = cfg.data.topk_video;
    io.max_len = cfg.data.max_len;
    const auto model = trainer.ema_model();
    const PredictionSet preds = infer_dataset(*model, val, io);
    save_predictions(preds, out_dir / "val_predictions.json");
    const EvalReport rep = evaluate_predictions(preds, val, val, {});
    nlohmann::json j = rep;
    write_text(out_dir / "val_report.json", j.dump(1) + "\n");
    std::cout << format_report(rep);
  }
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& data_dir, const std::string& out, InferOptions opts,
              int max_len, bool raw_weights) {
  const CheckpointMeta meta = read_checkpoint_meta(ckpt);
  const auto model = load_model(ckpt, !raw_weights);
  const Dataset data = load_dataset(data_dir);
  if (data.index.feature_dim != model->config().feature_dim) {
    throw DataError("dataset feature_dim " + std::to_string(data.index.feature_dim) + " differs from checkpoint " +
                    std::to_string(model->config().feature_dim));
  }
  opts.max_len = max_len > 0 ? max_len : meta.config.data.max_len;
  const PredictionSet preds = infer_dataset(*model, data, opts);
  save_predictions(preds, out);
  std::size_t n = 0;
  for (const auto& [_, r] : preds) n += r.size();
  log::info("wrote {} relation(s) for {} video(s) to {}", n, preds.size(), out);
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt_dir, const std::string& tracklet_dir,
             const EvalOptions& opts, const std::string& report) {
  const PredictionSet preds = load_predictions(pred);
  const Dataset gt = load_dataset(gt_dir);
  const Dataset tracks = tracklet_dir.empty() ? gt : load_dataset(tracklet_dir);
  const EvalReport rep = evaluate_predictions(preds, gt, tracks, opts);
  std::cout << format_report(rep);
  if (!report.empty()) {
    nlohmann::json j = rep;
    write_text(report, j.dump(1) + "\n");
  }
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out) {
  std::ifstream is(config_path);
  if (!is) throw ConfigError(config_path + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(config_path + ": " + e.what());
  }
  const SynthConfig cfg = j.get<SynthConfig>();
  cfg.validate();
  const Dataset ds = synth_dataset(cfg);
  save_dataset(ds, out);
  std::cout << format_stats(corpus_stats(ds));
  log::info("wrote {} video(s) to {}", ds.videos.size(), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  log::init_from_env();
  CLI::App app{"One-stage video visual relation detection (log level: VRDONE_LOG=trace|debug|info|warn|error|off)"};
  app.require_subcommand(1);

  std::string config, resume;
  auto* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  std::string ckpt, data, out;
  InferOptions io;
  int max_len = 0;
  bool raw = false;
  auto* infer = app.add_subcommand("infer", "Write predictions for a dataset");
  infer->add_option("--ckpt", ckpt, "Checkpoint archive")->required()->check(CLI::ExistingFile);
  infer->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--out", out, "Prediction file")->required();
  infer->add_option("--topk-predicates", io.topk_predicates, "Predicates kept per instance")->capture_default_str()->check(CLI::PositiveNumber);
  infer->add_option("--topk-video", io.topk_video, "Relations kept per video")->capture_default_str()->check(CLI::PositiveNumber);
  infer->add_option("--conf", io.conf_thresh, "Tracklet confidence filter")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  infer->add_option("--max-len", max_len, "Pair length (default: from the checkpoint)");
  infer->add_flag("--raw-weights", raw, "Use raw instead of EMA weights");

  std::string pred, gt, tracklets, report;
  EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "Score a prediction file");
  eval->add_option("--pred", pred, "Prediction file")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "Ground-truth dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--viou", eo.viou_thresh, "vIoU threshold")->capture_default_str();
  eval->add_option("--tiou", eo.tiou_thresh, "tIoU threshold")->capture_default_str();
  eval->add_option("--tracklets", tracklets, "Dataset whose tracklets the predictions refer to (default: --gt)")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--report", report, "Write the report as JSON");
  eval->add_flag("--viou-gt-denominator", eo.viou_gt_denominator, "Normalise vIoU by the ground-truth span");
  eval->add_flag("--per-class-ap", eo.per_class_ap, "Average AP over predicates instead of videos");
  eval->add_option("--span-tolerance", eo.span_tolerance, "Accept boundaries within N sampled frames instead of the tIoU test");

  std::string synth_config, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", synth_config, "Generator config (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config, resume);
    if (*infer) return cmd_infer(ckpt, data, out, io, max_len, raw);
    if (*eval) return cmd_eval(pred, gt, tracklets, eo, report);
    if (*synth) return cmd_synth(synth_config, synth_out);
  } catch (const std::exception& e) {
    log::error("{}", e.what());
    return 1;
  }
  return 0;
}
