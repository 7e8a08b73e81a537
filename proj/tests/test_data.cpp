#include "vrdone/data.hpp"
#include "vrdone/feature_io.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <random>

using namespace vrdone;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vrdone_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tracklet make_track(int id, int start, int len, double x, std::mt19937_64& rng, Index dim = 3) {
  Tracklet t;
  t.entity_id = id;
  t.category = "cat" + std::to_string(id % 2);
  t.start_frame = start;
  std::uniform_real_distribution<double> u(-1, 1);
  for (int f = 0; f < len; ++f) t.boxes.push_back({x + f, 40.0 + 0.5 * f, 20.0, 10.0});
  t.features = Matrix(len, dim);
  // float-representable so the float32 container round-trips exactly
  for (Index i = 0; i < t.features.size(); ++i) t.features.data()[i] = static_cast<float>(u(rng));
  t.confidence = 0.9;
  return t;
}

VideoRecord sample_video(std::mt19937_64& rng) {
  VideoRecord v;
  v.video_id = "vid0";
  v.frame_w = 200;
  v.frame_h = 100;
  v.sample_stride = 4;
  v.tracklets = {make_track(1, 0, 30, 10, rng), make_track(2, 5, 30, 60, rng), make_track(7, 20, 5, 20, rng)};
  v.relations = {{1, 2, 0, {5, 20}}, {2, 1, 1, {10, 29}}};
  return v;
}

}  // namespace

TEST_CASE("feature container round trip") {
  const fs::path dir = scratch("feat");
  FeatureContainer fc;
  fc.visual[3] = Matrix::Constant(2, 4, 0.5);
  fc.extra[3] = Matrix::Constant(2, 1, -1.25);
  write_features(fc, dir / "a.feat");
  const FeatureContainer back = read_features(dir / "a.feat");
  CHECK(back.visual.at(3) == fc.visual.at(3));
  CHECK(back.extra.at(3) == fc.extra.at(3));
  std::ofstream(dir / "bad.feat") << "garbage";
  CHECK_THROWS_AS(read_features(dir / "bad.feat"), DataError);
}

TEST_CASE("manifest round trip is the identity") {
  std::mt19937_64 rng(51);
  const fs::path dir = scratch("roundtrip");
  const VideoRecord v = sample_video(rng);
  save_video(v, dir);
  const VideoRecord w = load_video(dir / "vid0.json");
  CHECK(w.video_id == v.video_id);
  CHECK(w.frame_w == v.frame_w);
  CHECK(w.frame_h == v.frame_h);
  CHECK(w.sample_stride == v.sample_stride);
  CHECK(w.relations == v.relations);
  REQUIRE(w.tracklets.size() == v.tracklets.size());
  for (std::size_t i = 0; i < v.tracklets.size(); ++i) {
    CHECK(w.tracklets[i].entity_id == v.tracklets[i].entity_id);
    CHECK(w.tracklets[i].category == v.tracklets[i].category);
    CHECK(w.tracklets[i].start_frame == v.tracklets[i].start_frame);
    CHECK(w.tracklets[i].confidence == v.tracklets[i].confidence);
    CHECK(w.tracklets[i].boxes == v.tracklets[i].boxes);
    CHECK(w.tracklets[i].features == v.tracklets[i].features);
  }
}

TEST_CASE("minimal manifest and validation errors") {
  std::mt19937_64 rng(52);
  const fs::path dir = scratch("minimal");
  VideoRecord v;
  v.video_id = "one";
  v.frame_w = v.frame_h = 10;
  v.tracklets = {make_track(4, 0, 3, 5, rng)};
  save_video(v, dir);
  CHECK(load_video(dir / "one.json").tracklets.size() == 1);

  nlohmann::json j;
  std::ifstream(dir / "one.json") >> j;
  j["tracklets"][0]["boxes"][1][2] = -3.0;
  std::ofstream(dir / "one.json") << j.dump();
  CHECK_THROWS_WITH_AS(load_video(dir / "one.json"), doctest::Contains("entity 4, frame 1"), DataError);

  j["tracklets"][0]["boxes"][1][2] = 3.0;
  j.erase("video_id");
  std::ofstream(dir / "one.json") << j.dump();
  CHECK_THROWS_WITH_AS(load_video(dir / "one.json"), doctest::Contains("video_id"), DataError);

  VideoRecord bad = sample_video(rng);
  bad.relations.push_back({1, 99, 0, {0, 3}});  // unknown entity
  CHECK_THROWS_AS(validate_video(bad), DataError);
}

TEST_CASE("xyxy boxes are converted on load") {
  std::mt19937_64 rng(53);
  const fs::path dir = scratch("xyxy");
  VideoRecord v;
  v.video_id = "c";
  v.frame_w = v.frame_h = 100;
  v.tracklets = {make_track(1, 0, 2, 5, rng)};
  save_video(v, dir);
  nlohmann::json j;
  std::ifstream(dir / "c.json") >> j;
  j["box_format"] = "xyxy";
  j["tracklets"][0]["boxes"] = {{0, 0, 10, 20}, {5, 5, 15, 25}};
  std::ofstream(dir / "c.json") << j.dump();
  const VideoRecord w = load_video(dir / "c.json");
  CHECK(w.tracklets[0].boxes[0] == BBox{5, 10, 10, 20});
}

TEST_CASE("missing features leave the tracklet without features") {
  std::mt19937_64 rng(54);
  const fs::path dir = scratch("missing");
  VideoRecord v = sample_video(rng);
  save_video(v, dir);
  FeatureContainer fc = read_features(dir / "vid0.feat");
  fc.visual.erase(2);
  write_features(fc, dir / "vid0.feat");
  const VideoRecord w = load_video(dir / "vid0.json");
  CHECK_FALSE(w.find(2)->has_features());
  const InferenceBuckets b = build_inference_pairs(w, 0.4, 64);
  CHECK(b.regular.size() == 2);  // (1,7) and (7,1); pairs with entity 2 skipped
  CHECK(b.skipped.size() == 4);
}

TEST_CASE("dataset index") {
  std::mt19937_64 rng(55);
  const fs::path dir = scratch("dataset");
  Dataset ds;
  ds.index.predicates = {"a", "b"};
  ds.index.feature_dim = 3;
  ds.videos = {sample_video(rng)};
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  CHECK(back.index.predicates == ds.index.predicates);
  CHECK(back.index.video_ids == std::vector<std::string>{"vid0"});
  ds.index.predicates = {"a"};
  save_dataset(ds, dir);
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("vocabulary"), DataError);
}

TEST_CASE("pair sample layout") {
  std::mt19937_64 rng(56);
  VideoRecord v;
  v.video_id = "p";
  v.frame_w = v.frame_h = 100;
  v.tracklets = {make_track(1, 0, 100, 10, rng), make_track(2, 0, 100, 30, rng)};
  const PairSample p = make_pair_sample(v, v.tracklets[0], v.tracklets[1], {0, 99}, 512);
  CHECK(p.length() == 512);
  CHECK(p.valid_count() == 100);
  CHECK(p.features_s.bottomRows(412).isZero());
  CHECK(p.theta_r.rows() == 512);
}

TEST_CASE("rasterize") {
  const RowVector r = rasterize({3, 5}, 2, 6);
  CHECK(r == (RowVector(6) << 0, 1, 1, 1, 0, 0).finished());
  CHECK(rasterize({0, 10}, 2, 4).sum() == 4);
}

TEST_CASE("training pairs: crop window and shifted masks") {
  std::mt19937_64 rng(57);
  VideoRecord v;
  v.video_id = "t";
  v.frame_w = v.frame_h = 500;
  v.tracklets = {make_track(1, 0, 600, 10, rng), make_track(2, 0, 600, 30, rng)};
  v.relations = {{1, 2, 0, {100, 180}}, {1, 2, 1, {0, 599}}};
  for (int trial = 0; trial < 20; ++trial) {
    const auto pairs = build_training_pairs(v, 512, 9, rng);
    REQUIRE(pairs.size() == 1);
    const PairSample& p = pairs[0];
    CHECK(p.span.length() == 512);
    CHECK(p.valid_count() == 512);
    const int off = p.span.begin;
    CHECK(off >= 0);
    CHECK(off <= 88);
    REQUIRE(p.gt.size() == 2);
    for (int j = 0; j < 2; ++j) {
      const auto& r = v.relations[static_cast<std::size_t>(j)];
      const TemporalSpan clipped{std::max(r.span.begin, p.span.begin), std::min(r.span.end, p.span.end)};
      CHECK(p.gt.classes[static_cast<std::size_t>(j)] == r.predicate);
      CHECK(RowVector(p.gt.masks.row(j)) == rasterize(clipped, off, 512));
    }
    CHECK(p.gt.masks.row(1).sum() == 512);  // covers the whole crop
  }
}

TEST_CASE("training pairs: padding, drop rules") {
  std::mt19937_64 rng(58);
  VideoRecord v;
  v.video_id = "t";
  v.frame_w = v.frame_h = 500;
  v.tracklets = {make_track(1, 0, 100, 10, rng), make_track(2, 0, 100, 30, rng), make_track(3, 0, 100, 50, rng)};
  v.relations = {{1, 2, 0, {0, 99}}};
  for (int k = 0; k < 4; ++k) v.relations.push_back({2, 3, k, {k * 10, k * 10 + 5}});
  auto pairs = build_training_pairs(v, 512, 3, rng);
  REQUIRE(pairs.size() == 1);  // pair (2,3) has 4 > N_q relations
  CHECK(pairs[0].valid_count() == 100);
  CHECK(pairs[0].length() == 512);
  CHECK(pairs[0].gt.masks.row(0).head(100).sum() == 100);
  CHECK(pairs[0].gt.masks.row(0).tail(412).sum() == 0);

  // Relations longer than twice max_len are dropped; clipped fragments under two frames too.
  VideoRecord lv;
  lv.video_id = "l";
  lv.frame_w = lv.frame_h = 500;
  lv.tracklets = {make_track(1, 0, 100, 10, rng), make_track(2, 0, 100, 30, rng)};
  lv.relations = {{1, 2, 0, {0, 99}}, {1, 2, 1, {40, 60}}};
  const auto lp = build_training_pairs(lv, 40, 9, rng);
  REQUIRE(lp.size() == 1);
  for (int c : lp[0].gt.classes) CHECK(c == 1);
}

TEST_CASE("inference pairs") {
  std::mt19937_64 rng(59);
  VideoRecord v;
  v.video_id = "i";
  v.frame_w = v.frame_h = 500;
  v.tracklets = {make_track(1, 0, 50, 10, rng), make_track(2, 10, 50, 30, rng), make_track(3, 20, 50, 50, rng)};
  CHECK(build_inference_pairs(v, 0.4, 64).regular.size() == 6);
  v.tracklets[2].confidence = 0.3;
  const auto b = build_inference_pairs(v, 0.4, 64);
  CHECK(b.regular.size() == 2);
  for (const auto& p : b.regular) {
    CHECK(p.subject_id != 3);
    CHECK(p.object_id != 3);
  }
  v.tracklets[2].confidence = 0.4;  // strictly greater is required
  CHECK(build_inference_pairs(v, 0.4, 64).regular.size() == 2);

  VideoRecord d;
  d.video_id = "d";
  d.frame_w = d.frame_h = 500;
  d.tracklets = {make_track(1, 0, 10, 10, rng), make_track(2, 20, 10, 30, rng)};
  CHECK(build_inference_pairs(d, 0.4, 64).regular.empty());

  VideoRecord l;
  l.video_id = "l";
  l.frame_w = l.frame_h = 500;
  l.tracklets = {make_track(1, 0, 100, 10, rng), make_track(2, 0, 80, 30, rng), make_track(3, 0, 30, 50, rng)};
  const auto lb = build_inference_pairs(l, 0.4, 64);
  CHECK(lb.regular.size() == 4);
  REQUIRE(lb.long_pairs.size() == 2);
  for (const auto& p : lb.long_pairs) CHECK(p.length() == 80);
  for (const auto& p : lb.regular) CHECK(p.length() == 64);
}

TEST_CASE("mask to boundaries") {
  const std::vector<double> a{0.1, 0.2, 0.9, 0.8, 0.9, 0.1};
  CHECK(mask_to_boundaries(a, {}) == TemporalSpan{2, 4});
  const std::vector<double> b{0.9, 0.2, 0.9};
  CHECK(mask_to_boundaries(b, {}) == TemporalSpan{0, 2});
  const std::vector<double> c{0.5, 0.1, 0.3};
  CHECK_FALSE(mask_to_boundaries(c, {}).has_value());
  CHECK(mask_to_boundaries(a, Mask{1, 1, 1, 1, 0, 0}) == TemporalSpan{2, 3});
}
