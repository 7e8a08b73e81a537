#include "vrdone/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

namespace vrdone {

double t_iou(const TemporalSpan& a, const TemporalSpan& b) {
  const int inter = std::max(0, std::min(a.end, b.end) - std::max(a.begin, b.begin) + 1);
  const int uni = a.length() + b.length() - inter;
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

double v_iou(const TemporalSpan& pred_span, const std::vector<BBox>& pred_boxes,
             const TemporalSpan& gt_span, const std::vector<BBox>& gt_boxes, bool gt_denominator) {
  if (static_cast<int>(pred_boxes.size()) != pred_span.length() ||
      static_cast<int>(gt_boxes.size()) != gt_span.length()) {
    throw std::invalid_argument("v_iou: boxes do not cover their span");
  }
  const int lo = std::max(pred_span.begin, gt_span.begin);
  const int hi = std::min(pred_span.end, gt_span.end);
  double acc = 0.0;
  for (int f = lo; f <= hi; ++f) {
    acc += box_iou(pred_boxes[static_cast<std::size_t>(f - pred_span.begin)],
                   gt_boxes[static_cast<std::size_t>(f - gt_span.begin)]);
  }
  const int inter = std::max(0, hi - lo + 1);
  const int denom = gt_denominator ? gt_span.length() : pred_span.length() + gt_span.length() - inter;
  return denom > 0 ? acc / denom : 0.0;
}

double average_precision(const std::vector<bool>& hits, int num_gt) {
  if (num_gt <= 0) return 0.0;
  std::vector<double> recall, precision;
  int tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i]) ++tp;
    recall.push_back(static_cast<double>(tp) / num_gt);
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  // Precision envelope, then area under the step curve.
  std::vector<double> mrec{0.0}, mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

void sort_triplets(std::vector<DetectedTriplet>& t) {
  std::stable_sort(t.begin(), t.end(), [](const DetectedTriplet& a, const DetectedTriplet& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.subject_id, a.object_id, a.predicate, a.span.begin) <
           std::tie(b.subject_id, b.object_id, b.predicate, b.span.begin);
  });
}

namespace {

void check_same_videos(const TripletsByVideo& preds, const TripletsByVideo& gts) {
  std::vector<std::string> missing_pred, missing_gt;
  for (const auto& [id, _] : gts)
    if (!preds.count(id)) missing_pred.push_back(id);
  for (const auto& [id, _] : preds)
    if (!gts.count(id)) missing_gt.push_back(id);
  if (missing_pred.empty() && missing_gt.empty()) return;
  std::ostringstream os;
  os << "video id sets differ;";
  if (!missing_pred.empty()) {
    os << " missing from predictions:";
    for (const auto& id : missing_pred) os << ' ' << id;
    os << ';';
  }
  if (!missing_gt.empty()) {
    os << " missing from ground truth:";
    for (const auto& id : missing_gt) os << ' ' << id;
  }
  throw DataError(os.str());
}

bool same_class(const DetectedTriplet& a, const DetectedTriplet& b) {
  return a.predicate == b.predicate && a.subject_category == b.subject_category &&
         a.object_category == b.object_category;
}

struct VideoMatch {
  std::vector<bool> hits;
  std::vector<double> scores;
  std::vector<int> predicates;
};

/// Greedy matching in score order; each prediction takes the unmatched
/// ground truth with the highest min(vIoU_s, vIoU_o, tIoU), first index on ties.
VideoMatch match_video(std::vector<DetectedTriplet> preds, const std::vector<DetectedTriplet>& gts,
                       const EvalOptions& opts) {
  sort_triplets(preds);
  VideoMatch m;
  std::vector<bool> used(gts.size(), false);
  for (const auto& p : preds) {
    int best = -1;
    double best_ov = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || !same_class(p, gts[g])) continue;
      const double ti = t_iou(p.span, gts[g].span);
      if (opts.span_tolerance >= 0) {
        if (std::abs(p.span.begin - gts[g].span.begin) > opts.span_tolerance ||
            std::abs(p.span.end - gts[g].span.end) > opts.span_tolerance) {
          continue;
        }
      } else if (ti <= opts.tiou_thresh) {
        continue;
      }
      const double vs = v_iou(p.span, p.subject_boxes, gts[g].span, gts[g].subject_boxes, opts.viou_gt_denominator);
      if (vs <= opts.viou_thresh) continue;
      const double vo = v_iou(p.span, p.object_boxes, gts[g].span, gts[g].object_boxes, opts.viou_gt_denominator);
      if (vo <= opts.viou_thresh) continue;
      const double ov = std::min({ti, vs, vo});
      if (ov > best_ov) {
        best_ov = ov;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) used[static_cast<std::size_t>(best)] = true;
    m.hits.push_back(best >= 0);
    m.scores.push_back(p.score);
    m.predicates.push_back(p.predicate);
  }
  return m;
}

double recall_at(const std::vector<bool>& hits, std::size_t k, int num_gt) {
  int tp = 0;
  for (std::size_t i = 0; i < std::min(k, hits.size()); ++i) tp += hits[i] ? 1 : 0;
  return static_cast<double>(tp) / num_gt;
}

}  // namespace

RelDetResult eval_reldet(const TripletsByVideo& preds, const TripletsByVideo& gts,
                         const EvalOptions& opts) {
  check_same_videos(preds, gts);
  RelDetResult r;
  int counted = 0;
  // Pooled per-predicate records for the per-class variant.
  std::map<int, std::vector<std::pair<double, bool>>> pooled;
  std::map<int, int> gt_per_class;
  for (const auto& [id, gt] : gts) {
    if (gt.empty()) continue;
    VideoMatch m = match_video(preds.at(id), gt, opts);
    const int n = static_cast<int>(gt.size());
    r.map += average_precision(m.hits, n);
    r.r50 += recall_at(m.hits, 50, n);
    r.r100 += recall_at(m.hits, 100, n);
    ++counted;
    for (std::size_t i = 0; i < m.hits.size(); ++i) pooled[m.predicates[i]].emplace_back(m.scores[i], m.hits[i]);
    for (const auto& g : gt) ++gt_per_class[g.predicate];
  }
  if (counted == 0) return {};
  r.map /= counted;
  r.r50 /= counted;
  r.r100 /= counted;
  if (opts.per_class_ap) {
    double total = 0.0;
    for (const auto& [cls, n] : gt_per_class) {
      auto records = pooled[cls];
      std::stable_sort(records.begin(), records.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      std::vector<bool> hits;
      for (const auto& rec : records) hits.push_back(rec.second);
      total += average_precision(hits, n);
    }
    r.map = total / static_cast<double>(gt_per_class.size());
  }
  return r;
}

RelTagResult eval_reltag(const TripletsByVideo& preds, const TripletsByVideo& gts) {
  check_same_videos(preds, gts);
  using Key = std::tuple<std::string, int, std::string>;
  RelTagResult r;
  int counted = 0;
  for (const auto& [id, gt] : gts) {
    if (gt.empty()) continue;
    ++counted;
    std::set<Key> truth;
    for (const auto& g : gt) truth.emplace(g.subject_category, g.predicate, g.object_category);
    std::map<Key, double> best;
    for (const auto& p : preds.at(id)) {
      Key k{p.subject_category, p.predicate, p.object_category};
      auto it = best.find(k);
      if (it == best.end() || p.score > it->second) best[k] = p.score;
    }
    std::vector<std::pair<Key, double>> ranked(best.begin(), best.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    auto precision = [&](std::size_t k) {
      int hit = 0;
      for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) hit += truth.count(ranked[i].first) ? 1 : 0;
      return static_cast<double>(hit) / static_cast<double>(k);
    };
    r.p1 += precision(1);
    r.p5 += precision(5);
    r.p10 += precision(10);
  }
  if (counted == 0) return {};
  r.p1 /= counted;
  r.p5 /= counted;
  r.p10 /= counted;
  return r;
}

EvalReport evaluate(const TripletsByVideo& preds, const TripletsByVideo& gts, const EvalOptions& opts) {
  const RelDetResult det = eval_reldet(preds, gts, opts);
  const RelTagResult tag = eval_reltag(preds, gts);
  EvalReport rep;
  rep.reldet_map = det.map;
  rep.reldet_r50 = det.r50;
  rep.reldet_r100 = det.r100;
  rep.reltag_p1 = tag.p1;
  rep.reltag_p5 = tag.p5;
  rep.reltag_p10 = tag.p10;
  rep.videos = static_cast<int>(gts.size());
  return rep;
}

std::vector<DetectedTriplet> ground_truth_triplets(const VideoRecord& v) {
  std::vector<DetectedTriplet> out;
  for (const auto& r : v.relations) {
    const Tracklet* s = v.find(r.subject_id);
    const Tracklet* o = v.find(r.object_id);
    DetectedTriplet t;
    t.subject_category = s->category;
    t.object_category = o->category;
    t.predicate = r.predicate;
    t.subject_id = r.subject_id;
    t.object_id = r.object_id;
    t.span = r.span;
    t.subject_boxes = boxes_in_span(*s, r.span);
    t.object_boxes = boxes_in_span(*o, r.span);
    t.score = 1.0;
    out.push_back(std::move(t));
  }
  return out;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"relation_detection", {{"mAP", r.reldet_map}, {"R@50", r.reldet_r50}, {"R@100", r.reldet_r100}}},
       {"relation_tagging", {{"P@1", r.reltag_p1}, {"P@5", r.reltag_p5}, {"P@10", r.reltag_p10}}},
       {"videos", r.videos}};
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "|   Relation Detection   |    Relation Tagging    |\n";
  os << "|  mAP   |  R@50  | R@100  |  P@1   |  P@5   |  P@10  |\n";
  os << "|";
  for (double v : {r.reldet_map, r.reldet_r50, r.reldet_r100, r.reltag_p1, r.reltag_p5, r.reltag_p10})
    os << std::setw(7) << v * 100.0 << " |";
  os << "\n";
  return os.str();
}

}  // namespace vrdone
