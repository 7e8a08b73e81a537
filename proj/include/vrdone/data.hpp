#pragma once

#include "vrdone/geom.hpp"
#include "vrdone/pair_sample.hpp"

#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrdone {

inline constexpr int kManifestSchemaVersion = 1;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RelationAnnotation {
  int subject_id = 0;
  int object_id = 0;
  int predicate = 0;
  TemporalSpan span;  // sampled-frame coordinates, inclusive

  friend bool operator==(const RelationAnnotation&, const RelationAnnotation&) = default;
};

struct VideoRecord {
  std::string video_id;
  double frame_w = 0.0;
  double frame_h = 0.0;
  int sample_stride = 4;
  std::vector<Tracklet> tracklets;
  std::vector<RelationAnnotation> relations;

  const Tracklet* find(int entity_id) const;
};

/// Dataset directory index: predicate vocabulary and video list.
struct DatasetIndex {
  std::vector<std::string> predicates;
  Index feature_dim = 0;
  Index extra_dim = 0;
  std::vector<std::string> video_ids;
};

struct Dataset {
  DatasetIndex index;
  std::vector<VideoRecord> videos;
};

/// Reads `<stem>.json` and the sibling `<stem>.feat` container; throws DataError
/// with a field path on any schema violation.
VideoRecord load_video(const std::filesystem::path& manifest_path);
/// Writes `<dir>/<video_id>.json` and `<dir>/<video_id>.feat`.
void save_video(const VideoRecord& video, const std::filesystem::path& dir);
/// Structural checks shared by the loader and the generator.
void validate_video(const VideoRecord& video);

DatasetIndex load_index(const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Builds a padded pair over `span` (inside both tracklets). Frames beyond
/// span.length() up to `padded_len` are padding.
PairSample make_pair_sample(const VideoRecord& v, const Tracklet& subject, const Tracklet& object,
                            const TemporalSpan& span, Index padded_len);

/// Row of 0/1 over `length` frames starting at frame `origin`, set on `span`.
RowVector rasterize(const TemporalSpan& span, int origin, Index length);

/// One sample per annotated pair with temporal overlap. Overlaps longer than
/// `max_len` are randomly cropped with `rng`; relations longer than 2*max_len
/// are dropped, partially cropped relations are clipped and kept if at least
/// two frames survive; pairs with more than `num_queries` relations are dropped.
std::vector<PairSample> build_training_pairs(const VideoRecord& v, int max_len, int num_queries,
                                             std::mt19937_64& rng);

struct InferenceBuckets {
  std::vector<PairSample> regular;     // overlap <= max_len, padded to max_len
  std::vector<PairSample> long_pairs;  // padded to the longest overlap in the video
  std::vector<std::pair<int, int>> skipped;  // overlapping pairs lacking features
};

/// Ordered pairs among tracklets with confidence > conf_thresh that overlap in time.
InferenceBuckets build_inference_pairs(const VideoRecord& v, double conf_thresh, int max_len);

/// First and last valid index with prob > thresh; interior holes are kept.
std::optional<TemporalSpan> mask_to_boundaries(std::span<const double> probs, const Mask& valid,
                                               double thresh = 0.5);

}  // namespace vrdone
