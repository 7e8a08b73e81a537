#pragma once

#include "vrdone/geom.hpp"

#include <vector>

namespace vrdone {

/// Ground-truth relation instances of one pair, rasterised on the pair's frame axis.
struct GroundTruthSet {
  std::vector<int> classes;  // predicate index per instance
  Matrix masks;              // G x l_so, entries 0/1

  int size() const { return static_cast<int>(classes.size()); }
};

/// A subject-object pair trimmed to its temporal overlap and padded to `length()` frames.
struct PairSample {
  int subject_id = 0;
  int object_id = 0;
  TemporalSpan span;  // sampled-frame coordinates of the valid prefix
  Matrix features_s, features_o;
  Matrix extra_s, extra_o;  // empty when extra features are not used
  Matrix theta_a_s, theta_a_o;
  Matrix theta_r;
  Mask valid;
  GroundTruthSet gt;

  Index length() const { return static_cast<Index>(valid.size()); }
  int valid_count() const;
};

/// Plain (non-graph) model outputs.
struct OutputValues {
  Matrix class_logits;  // N_q x (P + 1), last column is the no-relation class
  Matrix mask_logits;   // N_q x l_so
};

}  // namespace vrdone
