#include "vrdone/config.hpp"
#include "vrdone/infer.hpp"
#include "vrdone/synth.hpp"
#include "vrdone/train.hpp"

#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <cmath>
#include <fstream>
#include <iterator>

using namespace vrdone;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vrdone_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Dataset tiny_dataset(std::uint64_t seed, int videos = 3) {
  SynthConfig s;
  s.num_videos = videos;
  s.frames = 32;
  s.feature_dim = 10;
  s.min_track_len = 16;
  s.segment_min = 6;
  s.segment_max = 16;
  s.seed = seed;
  return synth_dataset(s);
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.model = testing::small_config();
  c.model.feature_dim = 10;
  c.model.num_predicates = 6;
  c.model.num_queries = 8;
  c.model.droppath = 0.1;
  c.data.train_dir = out.string();
  c.data.max_len = 32;
  c.data.batch_size = 4;
  c.data.epochs = 2;
  c.optim.lr = 1e-3;
  c.optim.ema_decay = 0.9;
  c.output.dir = out.string();
  c.output.checkpoint_every = 0;
  c.output.log_every = 1000;
  c.seed = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("learning rate schedule") {
  OptimConfig c;
  c.warmup_steps = 10;
  const LrSchedule s(c, 100);
  CHECK(s(0) == 0.0);
  CHECK(s(5) == doctest::Approx(0.5 * c.lr));
  CHECK(s(10) == doctest::Approx(c.lr));
  CHECK(s(100) == doctest::Approx(2e-5));
  CHECK(s(55) == doctest::Approx(c.min_lr + 0.5 * (c.lr - c.min_lr)));
  for (long t = 11; t <= 100; ++t) CHECK(s(t) <= s(t - 1));

  OptimConfig d;
  CHECK(LrSchedule(d, 200).warmup() == 10);
}

TEST_CASE("adamw first step by hand") {
  nn::ParameterStore store;
  auto& w = store.constant("w", 1, 2, 1.0, true);
  auto& b = store.constant("b", 1, 1, 1.0, false);
  OptimConfig c;
  c.weight_decay = 0.1;
  AdamW opt(store, c);
  w.grad = (Matrix(1, 2) << 0.5, -2.0).finished();
  b.grad = Matrix::Constant(1, 1, 3.0);
  opt.step(0.01);
  // Bias-corrected first step moves each coordinate by lr * sign(g) up to eps; decay only on w.
  auto step = [](double g) { return 0.01 * g / (std::abs(g) + 1e-8); };
  CHECK(w.value(0, 0) == doctest::Approx(1.0 * (1 - 0.01 * 0.1) - step(0.5)).epsilon(1e-12));
  CHECK(w.value(0, 1) == doctest::Approx(1.0 * (1 - 0.01 * 0.1) - step(-2.0)).epsilon(1e-12));
  CHECK(b.value(0, 0) == doctest::Approx(1.0 - step(3.0)).epsilon(1e-12));
  CHECK(opt.first_moments()[0](0, 1) == doctest::Approx(-0.2));
  CHECK(opt.second_moments()[1](0, 0) == doctest::Approx(0.001 * 9.0));
}

TEST_CASE("gradient clipping") {
  nn::ParameterStore store;
  auto& a = store.constant("a", 1, 2, 0.0);
  a.grad = (Matrix(1, 2) << 3.0, 4.0).finished();
  CHECK(clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad.norm() == doctest::Approx(1.0));
  CHECK(clip_grad_norm(store, 10.0) == doctest::Approx(1.0));
  CHECK(a.grad.norm() == doctest::Approx(1.0));
}

TEST_CASE("ema extremes") {
  nn::ParameterStore store;
  auto& a = store.constant("a", 1, 1, 1.0);
  Ema zero(store, 0.0, false), one(store, 1.0, false), half(store, 0.5, false);
  a.value(0, 0) = 3.0;
  zero.update(store, 0);
  one.update(store, 0);
  half.update(store, 0);
  CHECK(zero.shadow()[0](0, 0) == 3.0);
  CHECK(one.shadow()[0](0, 0) == 1.0);
  CHECK(half.shadow()[0](0, 0) == 2.0);
  Ema ramp(store, 0.999, true);
  CHECK(ramp.decay_at(0) == doctest::Approx(0.1));
  CHECK(ramp.decay_at(1000000) == doctest::Approx(0.999));
}

TEST_CASE("run config parsing") {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "ok.json") << R"({
    // comment lines are allowed
    "model": {"feature_dim": 6, "num_predicates": 6},
    "data": {"train_dir": "train", "max_len": 64},
    "seed": 9
  })";
  const RunConfig c = load_run_config(dir / "ok.json");
  CHECK(c.seed == 9);
  CHECK(c.data.max_len == 64);
  CHECK(fs::path(c.data.train_dir) == dir / "train");

  std::ofstream(dir / "bad.json") << R"({"model": {"feature_dim": 6, "dimm": 3}, "data": {"train_dir": "t"}})";
  CHECK_THROWS_WITH_AS(load_run_config(dir / "bad.json"), doctest::Contains("model.dimm"), ConfigError);
  std::ofstream(dir / "bad2.json") << R"({"optim": {"lr": -1}, "data": {"train_dir": "t"}})";
  CHECK_THROWS_AS(load_run_config(dir / "bad2.json"), ConfigError);

  nlohmann::json j = c;
  CHECK(j.get<RunConfig>().data.max_len == 64);
}

TEST_CASE("decode pair") {
  PairSample pair;
  pair.subject_id = 1;
  pair.object_id = 2;
  pair.span = {10, 17};
  pair.valid.assign(10, 0);
  for (int t = 0; t < 8; ++t) pair.valid[static_cast<std::size_t>(t)] = 1;
  OutputValues out;
  out.class_logits = (Matrix(1, 9) << 8, 7, 6, 5, 4, 3, 2, 1, 0).finished();
  out.mask_logits = Matrix::Constant(1, 10, -3.0);
  out.mask_logits.block(0, 2, 1, 8).setConstant(3.0);  // frames 8 and 9 are padding
  const InferOptions opts;
  const auto rels = decode_pair(out, pair, opts);
  REQUIRE(rels.size() == 6);
  const RowVector e = (out.class_logits.array() - 8.0).exp();
  for (std::size_t i = 0; i < rels.size(); ++i) {
    CHECK(rels[i].predicate == static_cast<int>(i));
    CHECK(rels[i].span == TemporalSpan{12, 17});
    CHECK(rels[i].score == doctest::Approx(e(static_cast<Index>(i)) / e.sum()).epsilon(1e-12));
    if (i > 0) CHECK(rels[i].score < rels[i - 1].score);
  }

  out.mask_logits.setConstant(-1.0);
  CHECK(decode_pair(out, pair, opts).empty());
}

TEST_CASE("retain top") {
  std::vector<PredictedRelation> rels;
  for (int i = 0; i < 300; ++i) rels.push_back({i % 7, i % 5, i % 3, {i, i + 1}, (i * 37 % 300) / 300.0});
  retain_top(rels, 200);
  REQUIRE(rels.size() == 200);
  for (std::size_t i = 1; i < rels.size(); ++i) CHECK(rels[i].score <= rels[i - 1].score);
  CHECK(rels.back().score == doctest::Approx(100.0 / 300.0));
}

TEST_CASE("prediction file round trip") {
  const fs::path dir = scratch("preds");
  PredictionSet p;
  p["a"] = {{1, 2, 3, {4, 8}, 0.123456789012345}, {2, 1, 0, {0, 4}, 1.0 / 3.0}};
  p["b"] = {};
  save_predictions(p, dir / "p.json");
  CHECK(load_predictions(dir / "p.json") == p);
  std::ofstream(dir / "bad.json") << R"({"schema_version": 7, "videos": []})";
  CHECK_THROWS_AS(load_predictions(dir / "bad.json"), DataError);
}

TEST_CASE("training reduces loss and checkpoints round trip") {
  const fs::path dir = scratch("train");
  RunConfig cfg = tiny_run(dir);
  cfg.data.epochs = 6;
  Trainer t(cfg, tiny_dataset(1));
  std::vector<double> losses;
  t.run(0, [&](const StepLog& s) { losses.push_back(s.total); });
  REQUIRE(losses.size() == static_cast<std::size_t>(t.total_steps()));
  REQUIRE(losses.size() >= 6);
  CHECK(losses.back() < losses.front());

  t.save_checkpoint(dir / "final.ckpt");
  const CheckpointMeta meta = read_checkpoint_meta(dir / "final.ckpt");
  CHECK(meta.step == t.step());
  CHECK(meta.config.seed == cfg.seed);

  auto raw = load_model(dir / "final.ckpt", false);
  auto ema = load_model(dir / "final.ckpt", true);
  auto expect_ema = t.ema_model();
  const auto& a = raw->params().params();
  const auto& b = t.model().params().params();
  const auto& c = ema->params().params();
  const auto& d = expect_ema->params().params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->value == b[i]->value);
    CHECK(c[i]->value == d[i]->value);
  }

  std::ofstream(dir / "broken.ckpt") << "VRDCKPT0";
  CHECK_THROWS(load_model(dir / "broken.ckpt"));
}

TEST_CASE("resume matches an uninterrupted run") {
  const fs::path dir = scratch("resume");
  const RunConfig cfg = tiny_run(dir);
  const Dataset data = tiny_dataset(2);

  Trainer full(cfg, data);
  full.run();
  REQUIRE(full.total_steps() >= 3);

  Trainer first(cfg, data);
  first.run(full.total_steps() / 2 + 1);
  first.save_checkpoint(dir / "mid.ckpt");
  Trainer second(cfg, data);
  second.resume(dir / "mid.ckpt");
  CHECK(second.step() == full.total_steps() / 2 + 1);
  second.run();
  CHECK(second.step() == full.step());
  const auto& a = full.model().params().params();
  const auto& b = second.model().params().params();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->value == b[i]->value);
    CHECK(full.ema().shadow()[i] == second.ema().shadow()[i]);
  }

  InferOptions opts;
  opts.max_len = cfg.data.max_len;
  const PredictionSet pa = infer_dataset(*full.ema_model(), data, opts);
  const PredictionSet pb = infer_dataset(*second.ema_model(), data, opts);
  save_predictions(pa, dir / "a.json");
  save_predictions(pb, dir / "b.json");
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
}

TEST_CASE("predictions convert to triplets against tracklets") {
  Dataset data = tiny_dataset(4, 2);
  for (auto& v : data.videos) v.sample_stride = 2;
  PredictionSet preds;
  const VideoRecord& v = data.videos[0];
  const RelationAnnotation& r = v.relations.at(0);
  preds[v.video_id] = {{r.subject_id, r.object_id, r.predicate, {r.span.begin * 2, r.span.end * 2}, 0.9}};
  preds[data.videos[1].video_id] = {};
  const TripletsByVideo trip = predictions_to_triplets(preds, data);
  const auto& t = trip.at(v.video_id).at(0);
  CHECK(t.span == r.span);
  CHECK(t.subject_boxes.size() == static_cast<std::size_t>(r.span.length()));
  CHECK(t.subject_boxes.front() == v.find(r.subject_id)->box_at(r.span.begin));

  preds[v.video_id][0].subject_id = 999;
  CHECK_THROWS_AS(predictions_to_triplets(preds, data), DataError);
}
