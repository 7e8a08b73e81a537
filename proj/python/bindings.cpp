#include "vrdone/config.hpp"
#include "vrdone/detector.hpp"
#include "vrdone/infer.hpp"
#include "vrdone/log.hpp"
#include "vrdone/matching.hpp"
#include "vrdone/metrics.hpp"
#include "vrdone/synth.hpp"
#include "vrdone/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace vrdone;

namespace {

nlohmann::json to_json(const py::handle& obj) {
  const py::module_ json = py::module_::import("json");
  return nlohmann::json::parse(py::cast<std::string>(json.attr("dumps")(obj)));
}

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::object synth(const py::dict& config, const std::string& out) {
  const SynthConfig cfg = to_json(config).get<SynthConfig>();
  cfg.validate();
  const Dataset ds = synth_dataset(cfg);
  save_dataset(ds, out);
  const CorpusStats st = corpus_stats(ds);
  return from_json({{"videos", ds.videos.size()},
                    {"relations", st.relations},
                    {"short_lived", st.short_lived},
                    {"enduring", st.enduring},
                    {"predicate_counts", st.predicate_counts},
                    {"duration_histogram", st.duration_histogram}});
}

std::string train(const std::string& config_path, const std::string& resume) {
  const RunConfig cfg = load_run_config(config_path);
  Trainer trainer(cfg, load_dataset(cfg.data.train_dir));
  if (!resume.empty()) trainer.resume(resume);
  {
    py::gil_scoped_release release;
    trainer.run();
  }
  const fs::path ckpt = fs::path(cfg.output.dir) / "final.ckpt";
  fs::create_directories(ckpt.parent_path());
  trainer.save_checkpoint(ckpt);
  return ckpt.string();
}

void infer(const std::string& ckpt, const std::string& data, const std::string& out, double conf,
           int topk_predicates, int topk_video, int max_len, bool raw_weights) {
  const CheckpointMeta meta = read_checkpoint_meta(ckpt);
  const auto model = load_model(ckpt, !raw_weights);
  const Dataset ds = load_dataset(data);
  InferOptions opts;
  opts.conf_thresh = conf;
  opts.topk_predicates = topk_predicates;
  opts.topk_video = topk_video;
  opts.max_len = max_len > 0 ? max_len : meta.config.data.max_len;
  PredictionSet preds;
  {
    py::gil_scoped_release release;
    preds = infer_dataset(*model, ds, opts);
  }
  save_predictions(preds, out);
}

py::object evaluate_files(const std::string& pred, const std::string& gt, double viou, double tiou,
                          int span_tolerance) {
  PredictionSet preds = load_predictions(pred);
  const Dataset truth = load_dataset(gt);
  if (preds.empty())
    for (const auto& v : truth.videos) preds[v.video_id];
  EvalOptions opts;
  opts.viou_thresh = viou;
  opts.tiou_thresh = tiou;
  opts.span_tolerance = span_tolerance;
  nlohmann::json j = evaluate(predictions_to_triplets(preds, truth), ground_truth_triplets(truth), opts);
  return from_json(j);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "One-stage video visual relation detection";
  log::init_from_env();

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("synth", &synth, py::arg("config"), py::arg("out"),
        "Generate a synthetic dataset into `out`; returns corpus statistics.");
  m.def("train", &train, py::arg("config"), py::arg("resume") = "",
        "Train from a run config file; returns the final checkpoint path.");
  m.def("infer", &infer, py::arg("ckpt"), py::arg("data"), py::arg("out"), py::arg("conf") = 0.4,
        py::arg("topk_predicates") = 6, py::arg("topk_video") = 200, py::arg("max_len") = 0,
        py::arg("raw_weights") = false, "Write a prediction file for a dataset directory.");
  m.def("evaluate", &evaluate_files, py::arg("pred"), py::arg("gt"), py::arg("viou") = 0.5,
        py::arg("tiou") = 0.5, py::arg("span_tolerance") = -1, "Score a prediction file; returns the report.");

  m.def("hungarian", [](const Matrix& cost) { return hungarian(cost); }, py::arg("cost"),
        "Row chosen for each column of a rows >= cols cost matrix.");
  m.def("pyramid_lengths", &pyramid_lengths, py::arg("length"), py::arg("blocks"));
  m.def("t_iou", [](int b0, int e0, int b1, int e1) { return t_iou({b0, e0}, {b1, e1}); });
  m.def("average_precision", &average_precision, py::arg("hits"), py::arg("num_gt"));
  m.def("predicates", &synth_predicates, "Predicate vocabulary of the synthetic generator.");
}
