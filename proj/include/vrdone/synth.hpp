#pragma once

#include "vrdone/data.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vrdone {

/// Procedural corpus of moving boxes whose relations follow from geometry.
struct SynthConfig {
  int num_videos = 20;
  int frames = 64;  // sampled frames per video
  double frame_w = 320.0;
  double frame_h = 240.0;
  int sample_stride = 1;
  int min_entities = 2;
  int max_entities = 4;
  int min_track_len = 24;
  double full_track_prob = 0.6;
  std::vector<std::string> categories{"person", "dog", "car", "ball"};
  Index feature_dim = 16;
  Index extra_dim = 0;
  double feature_noise = 0.05;
  double box_jitter = 0.0;  // pixels, gaussian; 0 keeps labels exactly re-derivable
  double low_conf_prob = 0.0;
  int segment_min = 12;
  int segment_max = 40;
  double pause_prob = 0.3;
  double speed_min = 2.0;
  double speed_max = 6.0;
  double size_min = 20.0;
  double size_max = 80.0;
  // Predicate rules.
  double side_margin = 16.0;    // pixels between centres for left_of / right_of
  double area_ratio = 2.0;      // larger / smaller threshold
  double distance_delta = 1.0;  // minimum per-frame distance change for approaching / departing
  int min_run = 4;              // minimum frames of a relation
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Predicate vocabulary of the generator, in class-index order.
const std::vector<std::string>& synth_predicates();

enum SynthPredicate : int {
  kLeftOf = 0,
  kRightOf = 1,
  kLarger = 2,
  kSmaller = 3,
  kApproaching = 4,
  kDeparting = 5,
};

/// Relations between `subject` and `object` derived from their boxes by the
/// generator's rules: maximal runs of at least `min_run` frames.
std::vector<RelationAnnotation> derive_relations(const Tracklet& subject, const Tracklet& object,
                                                 const SynthConfig& cfg);

std::vector<VideoRecord> synth_generate(const SynthConfig& cfg, std::uint64_t seed);
Dataset synth_dataset(const SynthConfig& cfg);

struct CorpusStats {
  std::map<std::string, int> predicate_counts;
  /// Relation duration as a fraction of its pair's overlap, ten bins of 0.1.
  std::vector<int> duration_histogram = std::vector<int>(10, 0);
  int relations = 0;
  int short_lived = 0;  // < 10% of overlap
  int enduring = 0;     // > 80% of overlap
};

CorpusStats corpus_stats(const Dataset& ds);
std::string format_stats(const CorpusStats& stats);

}  // namespace vrdone
