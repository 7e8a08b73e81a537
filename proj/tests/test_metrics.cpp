#include "vrdone/metrics.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace vrdone;

namespace {

DetectedTriplet triplet(int predicate, TemporalSpan span, double score = 1.0, double x = 50.0,
                        std::string subject = "person", std::string object = "dog") {
  DetectedTriplet t;
  t.subject_category = std::move(subject);
  t.object_category = std::move(object);
  t.predicate = predicate;
  t.span = span;
  t.subject_boxes.assign(static_cast<std::size_t>(span.length()), BBox{x, 50, 20, 20});
  t.object_boxes.assign(static_cast<std::size_t>(span.length()), BBox{x + 100, 50, 20, 20});
  t.score = score;
  return t;
}

}  // namespace

TEST_CASE("temporal iou") {
  CHECK(t_iou({0, 10}, {5, 15}) == doctest::Approx(6.0 / 16.0));
  CHECK(t_iou({0, 10}, {5, 15}) == doctest::Approx(0.375));
  CHECK(t_iou({0, 3}, {4, 7}) == 0.0);
  CHECK(t_iou({2, 9}, {2, 9}) == 1.0);
}

TEST_CASE("volume iou") {
  const std::vector<BBox> a(2, BBox{5, 5, 10, 10});
  const std::vector<BBox> b(2, BBox{10, 5, 10, 10});
  CHECK(v_iou({0, 1}, a, {0, 1}, b) == doctest::Approx(1.0 / 3.0));
  const std::vector<BBox> four(4, BBox{5, 5, 10, 10});
  CHECK(v_iou({0, 1}, a, {0, 3}, four) == doctest::Approx(0.5));
  CHECK(v_iou({0, 3}, four, {0, 1}, a) == doctest::Approx(0.5));
  CHECK(v_iou({0, 3}, four, {0, 1}, a, true) == doctest::Approx(1.0));
  CHECK(v_iou({0, 1}, a, {5, 6}, a) == 0.0);
}

TEST_CASE("average precision fixture") {
  const std::vector<bool> hits{true, false, true};
  CHECK(average_precision(hits, 3) == doctest::Approx((1.0 + 2.0 / 3.0) / 3.0).epsilon(1e-12));
  CHECK(average_precision(hits, 3) == doctest::Approx(0.556).epsilon(1e-3));
  CHECK(average_precision({}, 3) == 0.0);
  CHECK(average_precision({true, true}, 2) == 1.0);
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<bool> h(static_cast<std::size_t>(trial % 30));
    int tp = 0;
    for (std::size_t i = 0; i < h.size(); ++i) tp += (h[i] = coin(rng)) ? 1 : 0;
    const int num_gt = tp + trial % 4;
    CHECK(average_precision(h, num_gt) == doctest::Approx(oracle::average_precision(h, num_gt)).epsilon(1e-12));
  }
}

TEST_CASE("reldet ranking fixture") {
  TripletsByVideo gt{{"v", {triplet(0, {0, 9}), triplet(1, {10, 19}), triplet(2, {20, 29})}}};
  TripletsByVideo pred{{"v", {triplet(0, {0, 9}, 0.9), triplet(3, {0, 9}, 0.8), triplet(1, {10, 19}, 0.7)}}};
  const RelDetResult r = eval_reldet(pred, gt);
  CHECK(r.map == doctest::Approx((1.0 + 2.0 / 3.0) / 3.0).epsilon(1e-12));
  CHECK(r.r50 == doctest::Approx(2.0 / 3.0));
  CHECK(r.r100 == doctest::Approx(2.0 / 3.0));

  // A duplicate cannot match the same ground truth twice.
  pred["v"].push_back(triplet(0, {0, 9}, 0.95));
  CHECK(eval_reldet(pred, gt).r100 == doctest::Approx(2.0 / 3.0));

  // Overlaps at exactly the threshold do not count.
  TripletsByVideo half{{"v", {triplet(0, {0, 4}, 0.9)}}};
  TripletsByVideo one{{"v", {triplet(0, {0, 9})}}};
  CHECK(eval_reldet(half, one).map == 0.0);
  EvalOptions tol;
  tol.span_tolerance = 1;
  CHECK(eval_reldet(TripletsByVideo{{"v", {triplet(0, {1, 8}, 0.9)}}}, one, tol).map == 1.0);
  CHECK(eval_reldet(TripletsByVideo{{"v", {triplet(0, {2, 9}, 0.9)}}}, one, tol).map == 0.0);

  // Wrong location fails the volume test.
  CHECK(eval_reldet(TripletsByVideo{{"v", {triplet(0, {0, 9}, 0.9, 300)}}}, one).map == 0.0);
}

TEST_CASE("perfect predictions score one everywhere") {
  TripletsByVideo gt, pred;
  for (int v = 0; v < 3; ++v) {
    auto& g = gt["v" + std::to_string(v)];
    for (int k = 0; k < 10; ++k) g.push_back(triplet(k, {k, k + 12}, 1.0, 30.0 * k));
    auto& p = pred["v" + std::to_string(v)];
    for (std::size_t k = 0; k < g.size(); ++k) {
      p.push_back(g[k]);
      p.back().score = 1.0 - 0.01 * static_cast<double>(k);
    }
  }
  const EvalReport r = evaluate(pred, gt);
  CHECK(r.reldet_map == 1.0);
  CHECK(r.reldet_r50 == 1.0);
  CHECK(r.reldet_r100 == 1.0);
  CHECK(r.reltag_p1 == 1.0);
  CHECK(r.reltag_p5 == 1.0);
  CHECK(r.reltag_p10 == 1.0);
  CHECK(r.videos == 3);
}

TEST_CASE("empty predictions score zero") {
  TripletsByVideo gt{{"v", {triplet(0, {0, 9})}}};
  TripletsByVideo pred{{"v", {}}};
  const EvalReport r = evaluate(pred, gt);
  CHECK(r.reldet_map == 0.0);
  CHECK(r.reldet_r100 == 0.0);
  CHECK(r.reltag_p1 == 0.0);
}

TEST_CASE("recall at 100 is at least recall at 50") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> pred_dist(0, 5), start(0, 40);
  std::uniform_real_distribution<double> score(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    TripletsByVideo gt, pred;
    for (int v = 0; v < 3; ++v) {
      auto& g = gt[std::to_string(v)];
      auto& p = pred[std::to_string(v)];
      for (int k = 0; k < 8; ++k) {
        const int s = start(rng);
        g.push_back(triplet(pred_dist(rng), {s, s + 10}));
      }
      for (int k = 0; k < 150; ++k) {
        const int s = start(rng);
        p.push_back(triplet(pred_dist(rng), {s, s + 10}, score(rng)));
      }
    }
    const RelDetResult r = eval_reldet(pred, gt);
    CHECK(r.r100 >= r.r50);
  }
  // A hit ranked past 50 raises only R@100.
  TripletsByVideo gt{{"v", {triplet(0, {0, 9})}}};
  TripletsByVideo pred{{"v", {}}};
  for (int k = 0; k < 60; ++k) pred["v"].push_back(triplet(4, {0, 9}, 1.0 - 0.001 * k));
  pred["v"].push_back(triplet(0, {0, 9}, 0.5));
  const RelDetResult r = eval_reldet(pred, gt);
  CHECK(r.r50 == 0.0);
  CHECK(r.r100 == 1.0);
}

TEST_CASE("reltag precision uses K as denominator") {
  TripletsByVideo gt{{"v", {triplet(0, {0, 9}), triplet(1, {0, 9})}}};
  TripletsByVideo pred{{"v",
                        {triplet(0, {0, 9}, 0.9), triplet(0, {20, 29}, 0.8),
                         triplet(2, {0, 9}, 0.7, 50, "car", "ball"), triplet(1, {0, 9}, 0.6)}}};
  const RelTagResult r = eval_reltag(pred, gt);
  CHECK(r.p1 == 1.0);
  CHECK(r.p5 == doctest::Approx(2.0 / 5.0));
  CHECK(r.p10 == doctest::Approx(2.0 / 10.0));

  TripletsByVideo none{{"v", {}}};
  CHECK(eval_reltag(pred, none).p1 == 0.0);
}

TEST_CASE("video id sets must match") {
  TripletsByVideo gt{{"a", {}}, {"b", {}}};
  TripletsByVideo pred{{"a", {}}, {"c", {}}};
  CHECK_THROWS_WITH_AS(evaluate(pred, gt), doctest::Contains("missing from predictions: b"), DataError);
  CHECK_THROWS_WITH_AS(evaluate(pred, gt), doctest::Contains("missing from ground truth: c"), DataError);
}

TEST_CASE("report formatting") {
  EvalReport r;
  r.reldet_map = 0.5;
  const std::string s = format_report(r);
  CHECK(s.find("50.00") != std::string::npos);
  nlohmann::json j = r;
  CHECK(j.contains("relation_detection"));
}
