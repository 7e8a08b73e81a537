#pragma once

#include "vrdone/data.hpp"
#include "vrdone/geom.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace vrdone {

/// A relation instance with its entity tubes over the relation span.
struct DetectedTriplet {
  std::string subject_category;
  int predicate = 0;
  std::string object_category;
  int subject_id = 0;
  int object_id = 0;
  TemporalSpan span;
  std::vector<BBox> subject_boxes;  // one per frame of span
  std::vector<BBox> object_boxes;
  double score = 1.0;
};

struct EvalReport {
  double reldet_map = 0.0;
  double reldet_r50 = 0.0;
  double reldet_r100 = 0.0;
  double reltag_p1 = 0.0;
  double reltag_p5 = 0.0;
  double reltag_p10 = 0.0;
  int videos = 0;
};

struct EvalOptions {
  double viou_thresh = 0.5;
  double tiou_thresh = 0.5;
  /// Normalise vIoU by the ground-truth span instead of the span union.
  bool viou_gt_denominator = false;
  /// Average AP over predicates pooled across videos instead of over videos.
  bool per_class_ap = false;
  /// When >= 0, a temporal hit needs both boundaries within this many frames
  /// of the ground truth instead of tIoU above the threshold.
  int span_tolerance = -1;
};

/// Inclusive-frame temporal IoU.
double t_iou(const TemporalSpan& a, const TemporalSpan& b);

/// Sum over the common frames of box IoU, divided by the span union length
/// (or by the ground-truth span length with `gt_denominator`).
double v_iou(const TemporalSpan& pred_span, const std::vector<BBox>& pred_boxes,
             const TemporalSpan& gt_span, const std::vector<BBox>& gt_boxes,
             bool gt_denominator = false);

/// All-point interpolated average precision from ranked hit flags.
double average_precision(const std::vector<bool>& hits, int num_gt);

using TripletsByVideo = std::map<std::string, std::vector<DetectedTriplet>>;

struct RelDetResult {
  double map = 0.0;
  double r50 = 0.0;
  double r100 = 0.0;
};

struct RelTagResult {
  double p1 = 0.0;
  double p5 = 0.0;
  double p10 = 0.0;
};

/// Throws DataError when the two maps do not cover the same video ids.
RelDetResult eval_reldet(const TripletsByVideo& preds, const TripletsByVideo& gts,
                         const EvalOptions& opts = {});
RelTagResult eval_reltag(const TripletsByVideo& preds, const TripletsByVideo& gts);
EvalReport evaluate(const TripletsByVideo& preds, const TripletsByVideo& gts,
                    const EvalOptions& opts = {});

/// Sorts by (score desc, subject_id, object_id, predicate, begin).
void sort_triplets(std::vector<DetectedTriplet>& triplets);

/// Ground-truth triplets of a video, boxes cut from its tracklets.
std::vector<DetectedTriplet> ground_truth_triplets(const VideoRecord& v);

void to_json(nlohmann::json& j, const EvalReport& r);
/// Plain-text table with RelDet (mAP, R@50, R@100) and RelTag (P@1, P@5, P@10), x100.
std::string format_report(const EvalReport& r);

}  // namespace vrdone
