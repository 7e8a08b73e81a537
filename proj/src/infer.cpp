#include "vrdone/infer.hpp"

#include "vrdone/log.hpp"
#include "vrdone/loss.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <tuple>

namespace vrdone {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<PredictedRelation> decode_pair(const OutputValues& out, const PairSample& pair,
                                           const InferOptions& opts) {
  const Index nq = out.class_logits.rows();
  const Index classes = out.class_logits.cols() - 1;
  if (out.mask_logits.cols() != pair.length()) {
    throw std::invalid_argument("decode_pair: mask length differs from pair length");
  }
  std::vector<PredictedRelation> rels;
  for (Index q = 0; q < nq; ++q) {
    const RowVector logits = out.class_logits.row(q);
    const RowVector e = (logits.array() - logits.maxCoeff()).exp();
    const RowVector probs = e / e.sum();

    std::vector<double> mask(static_cast<std::size_t>(pair.length()));
    for (Index t = 0; t < pair.length(); ++t) mask[static_cast<std::size_t>(t)] = sigmoid(out.mask_logits(q, t));
    auto local = mask_to_boundaries(mask, pair.valid, opts.mask_thresh);
    if (!local) continue;

    std::vector<int> order(static_cast<std::size_t>(classes));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs(a) > probs(b); });
    const int k = std::min<int>(opts.topk_predicates, static_cast<int>(classes));
    for (int i = 0; i < k; ++i) {
      PredictedRelation r;
      r.subject_id = pair.subject_id;
      r.object_id = pair.object_id;
      r.predicate = order[static_cast<std::size_t>(i)];
      r.span = {pair.span.begin + local->begin, pair.span.begin + local->end};
      r.score = probs(r.predicate);
      rels.push_back(r);
    }
  }
  return rels;
}

void retain_top(std::vector<PredictedRelation>& rels, int k) {
  std::stable_sort(rels.begin(), rels.end(), [](const PredictedRelation& a, const PredictedRelation& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.subject_id, a.object_id, a.predicate, a.span.begin) <
           std::tie(b.subject_id, b.object_id, b.predicate, b.span.begin);
  });
  if (static_cast<int>(rels.size()) > k) rels.resize(static_cast<std::size_t>(k));
}

std::vector<PredictedRelation> infer_video(const VrdModel& model, const VideoRecord& video,
                                           const InferOptions& opts) {
  const int pad = std::max<int>(opts.max_len, static_cast<int>(model.config().min_length()));
  InferenceBuckets buckets = build_inference_pairs(video, opts.conf_thresh, pad);
  if (!buckets.skipped.empty()) {
    log::warn("video {}: {} pair(s) skipped for missing tracklet features", video.video_id,
              buckets.skipped.size());
  }
  std::vector<PredictedRelation> rels;
  for (const auto* bucket : {&buckets.regular, &buckets.long_pairs}) {
    const std::vector<OutputValues> outs = model.predict_batch(*bucket);
    for (std::size_t i = 0; i < bucket->size(); ++i) {
      auto r = decode_pair(outs[i], (*bucket)[i], opts);
      rels.insert(rels.end(), r.begin(), r.end());
    }
  }
  retain_top(rels, opts.topk_video);
  return rels;
}

PredictionSet infer_dataset(const VrdModel& model, const Dataset& dataset, const InferOptions& opts) {
  PredictionSet out;
  for (const auto& v : dataset.videos) {
    auto rels = infer_video(model, v, opts);
    for (auto& r : rels) {
      r.span.begin *= v.sample_stride;
      r.span.end *= v.sample_stride;
    }
    log::debug("video {}: {} relation(s)", v.video_id, rels.size());
    out[v.video_id] = std::move(rels);
  }
  return out;
}

void save_predictions(const PredictionSet& preds, const fs::path& path) {
  json videos = json::array();
  for (const auto& [id, rels] : preds) {
    json arr = json::array();
    for (const auto& r : rels) {
      arr.push_back({{"subject_id", r.subject_id},
                     {"object_id", r.object_id},
                     {"predicate", r.predicate},
                     {"begin", r.span.begin},
                     {"end", r.span.end},
                     {"score", r.score}});
    }
    videos.push_back({{"video_id", id}, {"relations", std::move(arr)}});
  }
  const json j = {{"schema_version", kPredictionSchemaVersion}, {"videos", std::move(videos)}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError(path.string() + ": cannot write");
  os << j.dump(1) << '\n';
  if (!os) throw DataError(path.string() + ": write failed");
}

PredictionSet load_predictions(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError(path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const std::string p = path.filename().string();
  try {
    if (j.at("schema_version").get<int>() != kPredictionSchemaVersion) {
      throw DataError(p + ".schema_version: unsupported version");
    }
    PredictionSet out;
    for (const auto& v : j.at("videos")) {
      const auto id = v.at("video_id").get<std::string>();
      auto& rels = out[id];
      for (const auto& r : v.at("relations")) {
        PredictedRelation pr;
        pr.subject_id = r.at("subject_id").get<int>();
        pr.object_id = r.at("object_id").get<int>();
        pr.predicate = r.at("predicate").get<int>();
        pr.span = {r.at("begin").get<int>(), r.at("end").get<int>()};
        pr.score = r.at("score").get<double>();
        if (pr.span.begin > pr.span.end) throw DataError(p + ": video " + id + " has begin > end");
        rels.push_back(pr);
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw DataError(p + ": " + e.what());
  }
}

TripletsByVideo predictions_to_triplets(const PredictionSet& preds, const Dataset& tracklets) {
  std::map<std::string, const VideoRecord*> videos;
  for (const auto& v : tracklets.videos) videos[v.video_id] = &v;
  TripletsByVideo out;
  for (const auto& [id, rels] : preds) {
    auto it = videos.find(id);
    if (it == videos.end()) throw DataError("predictions reference unknown video " + id);
    const VideoRecord& v = *it->second;
    auto& dst = out[id];
    for (const auto& r : rels) {
      const Tracklet* s = v.find(r.subject_id);
      const Tracklet* o = v.find(r.object_id);
      if (!s || !o) {
        throw DataError("video " + id + ": prediction references unknown entity " +
                        std::to_string(s ? r.object_id : r.subject_id));
      }
      const TemporalSpan span{r.span.begin / v.sample_stride, r.span.end / v.sample_stride};
      auto overlap = temporal_overlap(*s, *o);
      if (!overlap || span.begin < overlap->begin || span.end > overlap->end) {
        throw DataError("video " + id + ": predicted span of pair (" + std::to_string(r.subject_id) + ", " +
                        std::to_string(r.object_id) + ") lies outside the tracklet overlap");
      }
      DetectedTriplet t;
      t.subject_category = s->category;
      t.object_category = o->category;
      t.predicate = r.predicate;
      t.subject_id = r.subject_id;
      t.object_id = r.object_id;
      t.span = span;
      t.subject_boxes = boxes_in_span(*s, span);
      t.object_boxes = boxes_in_span(*o, span);
      t.score = r.score;
      dst.push_back(std::move(t));
    }
  }
  return out;
}

TripletsByVideo ground_truth_triplets(const Dataset& gt) {
  TripletsByVideo out;
  for (const auto& v : gt.videos) out[v.video_id] = ground_truth_triplets(v);
  return out;
}

}  // namespace vrdone
