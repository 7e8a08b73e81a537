#include "vrdone/geom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vrdone {

BBox BBox::from_corners(double x1, double y1, double x2, double y2) {
  return {0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
}

bool BBox::valid() const {
  return std::isfinite(x_c) && std::isfinite(y_c) && std::isfinite(w) && std::isfinite(h) &&
         w > 0.0 && h > 0.0;
}

std::optional<TemporalSpan> intersect(const TemporalSpan& a, const TemporalSpan& b) {
  const int lo = std::max(a.begin, b.begin);
  const int hi = std::min(a.end, b.end);
  if (lo > hi) return std::nullopt;
  return TemporalSpan{lo, hi};
}

std::optional<TemporalSpan> temporal_overlap(const Tracklet& a, const Tracklet& b) {
  if (a.boxes.empty() || b.boxes.empty()) return std::nullopt;
  return intersect(a.span(), b.span());
}

std::vector<BBox> boxes_in_span(const Tracklet& t, const TemporalSpan& span) {
  if (span.begin < t.start_frame || span.end > t.end_frame() || span.begin > span.end) {
    throw std::out_of_range("span [" + std::to_string(span.begin) + "," + std::to_string(span.end) +
                            "] outside tracklet " + std::to_string(t.entity_id));
  }
  const auto first = t.boxes.begin() + (span.begin - t.start_frame);
  return {first, first + span.length()};
}

Matrix abs_pos_features(const Tracklet& t, double frame_w, double frame_h, const TemporalSpan& span) {
  if (!(frame_w > 0.0) || !(frame_h > 0.0)) throw std::invalid_argument("frame size must be positive");
  const auto boxes = boxes_in_span(t, span);
  const Index n = static_cast<Index>(boxes.size());
  Matrix out = Matrix::Zero(n, 8);
  for (Index i = 0; i < n; ++i) {
    const BBox& b = boxes[static_cast<std::size_t>(i)];
    out(i, 0) = b.x_c / frame_w;
    out(i, 1) = b.y_c / frame_h;
    out(i, 2) = b.w / frame_w;
    out(i, 3) = b.h / frame_h;
    if (i > 0) {
      for (int c = 0; c < 4; ++c) out(i, 4 + c) = out(i, c) - out(i - 1, c);
    }
  }
  return out;
}

Matrix rel_pos_features(std::span<const BBox> subject, std::span<const BBox> object) {
  if (subject.size() != object.size()) {
    throw std::invalid_argument("rel_pos_features: subject/object length mismatch");
  }
  const Index n = static_cast<Index>(subject.size());
  Matrix out(n, 5);
  for (Index i = 0; i < n; ++i) {
    const BBox& s = subject[static_cast<std::size_t>(i)];
    const BBox& o = object[static_cast<std::size_t>(i)];
    const double xo = std::max(o.x_c, 1.0);
    const double yo = std::max(o.y_c, 1.0);
    out(i, 0) = (s.x_c - o.x_c) / xo;
    out(i, 1) = (s.y_c - o.y_c) / yo;
    out(i, 2) = std::log(s.w / o.w);
    out(i, 3) = std::log(s.h / o.h);
    out(i, 4) = std::log((s.w * s.h) / (o.w * o.h));
  }
  return out;
}

double box_iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

}  // namespace vrdone
