#pragma once

#include "vrdone/autograd.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vrdone {

/// Axis-aligned box in center format, pixel units.
struct BBox {
  double x_c = 0.0;
  double y_c = 0.0;
  double w = 1.0;
  double h = 1.0;

  static BBox from_corners(double x1, double y1, double x2, double y2);
  bool valid() const;
  double area() const { return w * h; }
  double x1() const { return x_c - 0.5 * w; }
  double y1() const { return y_c - 0.5 * h; }
  double x2() const { return x_c + 0.5 * w; }
  double y2() const { return y_c + 0.5 * h; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Inclusive frame interval.
struct TemporalSpan {
  int begin = 0;
  int end = 0;

  int length() const { return end - begin + 1; }
  bool contains(int frame) const { return frame >= begin && frame <= end; }
  friend bool operator==(const TemporalSpan&, const TemporalSpan&) = default;
};

/// One entity's boxes and visual features over consecutive sampled frames.
struct Tracklet {
  int entity_id = 0;
  std::string category;
  int start_frame = 0;
  std::vector<BBox> boxes;
  Matrix features;  // l x C
  Matrix extra;     // l x C_extra, or empty when no extra features
  double confidence = 1.0;

  int length() const { return static_cast<int>(boxes.size()); }
  /// False when the feature container had no entry for this entity.
  bool has_features() const { return features.rows() > 0; }
  int end_frame() const { return start_frame + length() - 1; }
  TemporalSpan span() const { return {start_frame, end_frame()}; }
  const BBox& box_at(int frame) const { return boxes.at(static_cast<std::size_t>(frame - start_frame)); }
};

std::optional<TemporalSpan> temporal_overlap(const Tracklet& a, const Tracklet& b);
std::optional<TemporalSpan> intersect(const TemporalSpan& a, const TemporalSpan& b);

/// Per frame: normalised (x_c, y_c, w, h) followed by their first differences
/// against the previous frame (zero on the first row).
Matrix abs_pos_features(const Tracklet& t, double frame_w, double frame_h, const TemporalSpan& span);

/// Per frame: [(x^s-x^o)/x^o, (y^s-y^o)/y^o, log(w^s/w^o), log(h^s/h^o), log(area^s/area^o)].
/// Denominators x^o, y^o are clamped to at least one pixel.
Matrix rel_pos_features(std::span<const BBox> subject, std::span<const BBox> object);

double box_iou(const BBox& a, const BBox& b);

/// Boxes of `t` restricted to `span` (which must lie inside the tracklet).
std::vector<BBox> boxes_in_span(const Tracklet& t, const TemporalSpan& span);

}  // namespace vrdone
