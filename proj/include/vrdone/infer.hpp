#pragma once

#include "vrdone/data.hpp"
#include "vrdone/detector.hpp"
#include "vrdone/metrics.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vrdone {

inline constexpr int kPredictionSchemaVersion = 1;

struct InferOptions {
  double conf_thresh = 0.4;
  int topk_predicates = 6;
  int topk_video = 200;
  double mask_thresh = 0.5;
  int max_len = 96;
};

/// One scored triplet. `span` is in sampled frames inside the pipeline and in
/// raw frames inside prediction files.
struct PredictedRelation {
  int subject_id = 0;
  int object_id = 0;
  int predicate = 0;
  TemporalSpan span;
  double score = 0.0;

  friend bool operator==(const PredictedRelation&, const PredictedRelation&) = default;
};

/// Per video, in file order.
using PredictionSet = std::map<std::string, std::vector<PredictedRelation>>;

/// Turns one pair's outputs into scored triplets: per query, predicate
/// probabilities (softmax over all classes, no-relation column dropped),
/// mask probabilities thresholded inside the valid frames, top-k predicates.
std::vector<PredictedRelation> decode_pair(const OutputValues& out, const PairSample& pair,
                                           const InferOptions& opts);

/// Orders by (score desc, subject, object, predicate, begin) and keeps `k`.
void retain_top(std::vector<PredictedRelation>& rels, int k);

/// Full per-video inference; spans returned in sampled frames.
std::vector<PredictedRelation> infer_video(const VrdModel& model, const VideoRecord& video,
                                           const InferOptions& opts);

/// Runs every video and converts spans to raw frames via sample_stride.
PredictionSet infer_dataset(const VrdModel& model, const Dataset& dataset, const InferOptions& opts);

void save_predictions(const PredictionSet& preds, const std::filesystem::path& path);
PredictionSet load_predictions(const std::filesystem::path& path);

/// Attaches categories and boxes from `tracklets` (raw-frame spans divided by
/// the video's sample_stride). Throws DataError on unknown videos or entities.
TripletsByVideo predictions_to_triplets(const PredictionSet& preds, const Dataset& tracklets);
TripletsByVideo ground_truth_triplets(const Dataset& gt);

}  // namespace vrdone
