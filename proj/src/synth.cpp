#include "vrdone/synth.hpp"

#include "vrdone/json_fields.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

namespace vrdone {

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw detail::ConfigError("synth." + m); };
  if (num_videos < 0) fail("num_videos must be >= 0");
  if (frames < 2) fail("frames must be >= 2");
  if (!(frame_w > 0 && frame_h > 0)) fail("frame size must be positive");
  if (sample_stride < 1) fail("sample_stride must be >= 1");
  if (min_entities < 2 || max_entities < min_entities) fail("need 2 <= min_entities <= max_entities");
  if (min_track_len < 2 || min_track_len > frames) fail("min_track_len must be in [2, frames]");
  if (categories.empty()) fail("categories must be non-empty");
  if (feature_dim < static_cast<Index>(categories.size()) + 6) fail("feature_dim must be >= categories + 6");
  if (extra_dim < 0) fail("extra_dim must be >= 0");
  if (segment_min < 1 || segment_max < segment_min) fail("segment lengths invalid");
  if (!(size_min > 0 && size_max >= size_min)) fail("size range invalid");
  if (2 * size_max >= std::min(frame_w, frame_h)) fail("size_max too large for the frame");
  if (min_run < 2) fail("min_run must be >= 2");
  if (!(area_ratio > 1.0)) fail("area_ratio must exceed 1");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"num_videos", c.num_videos},     {"frames", c.frames},
       {"frame_w", c.frame_w},           {"frame_h", c.frame_h},
       {"sample_stride", c.sample_stride}, {"min_entities", c.min_entities},
       {"max_entities", c.max_entities}, {"min_track_len", c.min_track_len},
       {"full_track_prob", c.full_track_prob}, {"categories", c.categories},
       {"feature_dim", c.feature_dim},   {"extra_dim", c.extra_dim},
       {"feature_noise", c.feature_noise}, {"box_jitter", c.box_jitter},
       {"low_conf_prob", c.low_conf_prob}, {"segment_min", c.segment_min},
       {"segment_max", c.segment_max},   {"pause_prob", c.pause_prob},
       {"speed_min", c.speed_min},       {"speed_max", c.speed_max},
       {"size_min", c.size_min},         {"size_max", c.size_max},
       {"side_margin", c.side_margin},   {"area_ratio", c.area_ratio},
       {"distance_delta", c.distance_delta}, {"min_run", c.min_run},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  const std::string p = "synth";
  detail::reject_unknown(
      j, {"num_videos", "frames", "frame_w", "frame_h", "sample_stride", "min_entities", "max_entities",
          "min_track_len", "full_track_prob", "categories", "feature_dim", "extra_dim", "feature_noise",
          "box_jitter", "low_conf_prob", "segment_min", "segment_max", "pause_prob", "speed_min",
          "speed_max", "size_min", "size_max", "side_margin", "area_ratio", "distance_delta", "min_run",
          "seed"},
      p);
  detail::read_optional(j, "num_videos", c.num_videos, p);
  detail::read_optional(j, "frames", c.frames, p);
  detail::read_optional(j, "frame_w", c.frame_w, p);
  detail::read_optional(j, "frame_h", c.frame_h, p);
  detail::read_optional(j, "sample_stride", c.sample_stride, p);
  detail::read_optional(j, "min_entities", c.min_entities, p);
  detail::read_optional(j, "max_entities", c.max_entities, p);
  detail::read_optional(j, "min_track_len", c.min_track_len, p);
  detail::read_optional(j, "full_track_prob", c.full_track_prob, p);
  detail::read_optional(j, "categories", c.categories, p);
  detail::read_optional(j, "feature_dim", c.feature_dim, p);
  detail::read_optional(j, "extra_dim", c.extra_dim, p);
  detail::read_optional(j, "feature_noise", c.feature_noise, p);
  detail::read_optional(j, "box_jitter", c.box_jitter, p);
  detail::read_optional(j, "low_conf_prob", c.low_conf_prob, p);
  detail::read_optional(j, "segment_min", c.segment_min, p);
  detail::read_optional(j, "segment_max", c.segment_max, p);
  detail::read_optional(j, "pause_prob", c.pause_prob, p);
  detail::read_optional(j, "speed_min", c.speed_min, p);
  detail::read_optional(j, "speed_max", c.speed_max, p);
  detail::read_optional(j, "size_min", c.size_min, p);
  detail::read_optional(j, "size_max", c.size_max, p);
  detail::read_optional(j, "side_margin", c.side_margin, p);
  detail::read_optional(j, "area_ratio", c.area_ratio, p);
  detail::read_optional(j, "distance_delta", c.distance_delta, p);
  detail::read_optional(j, "min_run", c.min_run, p);
  detail::read_optional(j, "seed", c.seed, p);
  c.validate();
}

const std::vector<std::string>& synth_predicates() {
  static const std::vector<std::string> names{"left_of", "right_of", "larger", "smaller", "approaching",
                                              "departing"};
  return names;
}

namespace {

/// Appends maximal runs of `holds` (indexed from overlap begin) of at least min_run frames.
void emit_runs(const std::vector<char>& holds, int origin, int predicate, int subject, int object,
               int min_run, std::vector<RelationAnnotation>& out) {
  const int n = static_cast<int>(holds.size());
  int t = 0;
  while (t < n) {
    if (!holds[t]) {
      ++t;
      continue;
    }
    int e = t;
    while (e + 1 < n && holds[e + 1]) ++e;
    if (e - t + 1 >= min_run) out.push_back({subject, object, predicate, {origin + t, origin + e}});
    t = e + 1;
  }
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::vector<RelationAnnotation> derive_relations(const Tracklet& subject, const Tracklet& object,
                                                 const SynthConfig& cfg) {
  std::vector<RelationAnnotation> out;
  auto ov = temporal_overlap(subject, object);
  if (!ov) return out;
  const int n = ov->length();
  std::vector<char> left(n), right(n), larger(n), smaller(n);
  std::vector<double> dist(n);
  for (int t = 0; t < n; ++t) {
    const BBox& s = subject.box_at(ov->begin + t);
    const BBox& o = object.box_at(ov->begin + t);
    left[t] = s.x_c < o.x_c - cfg.side_margin;
    right[t] = s.x_c > o.x_c + cfg.side_margin;
    larger[t] = s.area() > cfg.area_ratio * o.area();
    smaller[t] = o.area() > cfg.area_ratio * s.area();
    dist[t] = std::hypot(s.x_c - o.x_c, s.y_c - o.y_c);
  }
  // Maximal frame runs over which the centre distance changes monotonically by
  // more than distance_delta per frame. Adjacent runs may share a turning frame.
  auto monotone_runs = [&](bool decreasing) {
    auto step = [&](int k) {
      return decreasing ? dist[k + 1] < dist[k] - cfg.distance_delta
                        : dist[k + 1] > dist[k] + cfg.distance_delta;
    };
    std::vector<std::pair<int, int>> runs;
    int t = 0;
    while (t + 1 < n) {
      if (!step(t)) {
        ++t;
        continue;
      }
      int e = t + 1;
      while (e + 1 < n && step(e)) ++e;
      runs.emplace_back(t, e);
      t = e;
    }
    return runs;
  };
  emit_runs(left, ov->begin, kLeftOf, subject.entity_id, object.entity_id, cfg.min_run, out);
  emit_runs(right, ov->begin, kRightOf, subject.entity_id, object.entity_id, cfg.min_run, out);
  emit_runs(larger, ov->begin, kLarger, subject.entity_id, object.entity_id, cfg.min_run, out);
  emit_runs(smaller, ov->begin, kSmaller, subject.entity_id, object.entity_id, cfg.min_run, out);
  for (bool decreasing : {true, false}) {
    for (const auto& [a, b] : monotone_runs(decreasing)) {
      if (b - a + 1 >= cfg.min_run) {
        out.push_back({subject.entity_id, object.entity_id, decreasing ? kApproaching : kDeparting,
                       {ov->begin + a, ov->begin + b}});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return std::tie(x.predicate, x.span.begin) < std::tie(y.predicate, y.span.begin);
  });
  return out;
}

std::vector<VideoRecord> synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<VideoRecord> videos;
  const int ncat = static_cast<int>(cfg.categories.size());
  for (int vi = 0; vi < cfg.num_videos; ++vi) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(vi)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
    auto uniform_int = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

    VideoRecord v;
    std::ostringstream id;
    id << "synth_" << std::setw(5) << std::setfill('0') << vi;
    v.video_id = id.str();
    v.frame_w = cfg.frame_w;
    v.frame_h = cfg.frame_h;
    v.sample_stride = cfg.sample_stride;

    const int n = uniform_int(cfg.min_entities, cfg.max_entities);
    for (int e = 0; e < n; ++e) {
      Tracklet t;
      t.entity_id = e + 1;
      const int cat = uniform_int(0, ncat - 1);
      t.category = cfg.categories[static_cast<std::size_t>(cat)];
      const double w = std::round(uniform(cfg.size_min, cfg.size_max));
      const double h = std::round(uniform(cfg.size_min, cfg.size_max));
      const int len = unit(rng) < cfg.full_track_prob ? cfg.frames : uniform_int(cfg.min_track_len, cfg.frames);
      t.start_frame = uniform_int(0, cfg.frames - len);
      t.confidence = unit(rng) < cfg.low_conf_prob ? round_to_float(uniform(0.1, 0.39)) : 1.0;

      double x = uniform(w / 2, cfg.frame_w - w / 2);
      double y = uniform(h / 2, cfg.frame_h - h / 2);
      double vx = 0.0, vy = 0.0;
      int seg_left = 0;
      t.features = Matrix::Zero(len, cfg.feature_dim);
      if (cfg.extra_dim > 0) t.extra = Matrix::Zero(len, cfg.extra_dim);
      for (int f = 0; f < len; ++f) {
        if (f > 0) {
          if (seg_left == 0) {
            seg_left = uniform_int(cfg.segment_min, cfg.segment_max);
            if (unit(rng) < cfg.pause_prob) {
              vx = vy = 0.0;
            } else {
              const double ang = uniform(0.0, 2.0 * std::numbers::pi);
              const double sp = uniform(cfg.speed_min, cfg.speed_max);
              vx = sp * std::cos(ang);
              vy = sp * std::sin(ang);
            }
          }
          --seg_left;
          x += vx;
          y += vy;
          if (x < w / 2 || x > cfg.frame_w - w / 2) {
            vx = -vx;
            x = std::clamp(x, w / 2, cfg.frame_w - w / 2);
          }
          if (y < h / 2 || y > cfg.frame_h - h / 2) {
            vy = -vy;
            y = std::clamp(y, h / 2, cfg.frame_h - h / 2);
          }
        }
        BBox b{x, y, w, h};
        if (cfg.box_jitter > 0) {
          b.x_c += cfg.box_jitter * gauss(rng);
          b.y_c += cfg.box_jitter * gauss(rng);
        }
        b = {round_to_float(b.x_c), round_to_float(b.y_c), b.w, b.h};
        t.boxes.push_back(b);

        auto row = t.features.row(f);
        row(cat) = 1.0;
        row(ncat + 0) = b.x_c / cfg.frame_w;
        row(ncat + 1) = b.y_c / cfg.frame_h;
        row(ncat + 2) = b.w / cfg.frame_w;
        row(ncat + 3) = b.h / cfg.frame_h;
        if (f > 0) {
          row(ncat + 4) = (b.x_c - t.boxes[static_cast<std::size_t>(f - 1)].x_c) / 10.0;
          row(ncat + 5) = (b.y_c - t.boxes[static_cast<std::size_t>(f - 1)].y_c) / 10.0;
        }
        for (Index c = 0; c < cfg.feature_dim; ++c) row(c) = round_to_float(row(c) + cfg.feature_noise * gauss(rng));
        for (Index c = 0; c < cfg.extra_dim; ++c) {
          const double base = c < ncat ? (c == cat ? 1.0 : 0.0) : 0.0;
          t.extra(f, c) = round_to_float(base + cfg.feature_noise * gauss(rng));
        }
      }
      v.tracklets.push_back(std::move(t));
    }
    for (const auto& s : v.tracklets) {
      for (const auto& o : v.tracklets) {
        if (&s == &o) continue;
        auto rels = derive_relations(s, o, cfg);
        v.relations.insert(v.relations.end(), rels.begin(), rels.end());
      }
    }
    validate_video(v);
    videos.push_back(std::move(v));
  }
  return videos;
}

Dataset synth_dataset(const SynthConfig& cfg) {
  Dataset ds;
  ds.index.predicates = synth_predicates();
  ds.index.feature_dim = cfg.feature_dim;
  ds.index.extra_dim = cfg.extra_dim;
  ds.videos = synth_generate(cfg, cfg.seed);
  for (const auto& v : ds.videos) ds.index.video_ids.push_back(v.video_id);
  return ds;
}

CorpusStats corpus_stats(const Dataset& ds) {
  CorpusStats st;
  for (const auto& name : ds.index.predicates) st.predicate_counts[name] = 0;
  for (const auto& v : ds.videos) {
    for (const auto& r : v.relations) {
      const Tracklet* s = v.find(r.subject_id);
      const Tracklet* o = v.find(r.object_id);
      auto ov = temporal_overlap(*s, *o);
      const double frac = static_cast<double>(r.span.length()) / ov->length();
      const int bin = std::min(9, static_cast<int>(frac * 10.0));
      ++st.duration_histogram[static_cast<std::size_t>(bin)];
      ++st.relations;
      if (frac < 0.1) ++st.short_lived;
      if (frac > 0.8) ++st.enduring;
      const std::string name = r.predicate < static_cast<int>(ds.index.predicates.size())
                                   ? ds.index.predicates[static_cast<std::size_t>(r.predicate)]
                                   : std::to_string(r.predicate);
      ++st.predicate_counts[name];
    }
  }
  return st;
}

std::string format_stats(const CorpusStats& st) {
  std::ostringstream os;
  os << "relations: " << st.relations << " (short-lived <10%: " << st.short_lived
     << ", enduring >80%: " << st.enduring << ")\n";
  os << "predicate counts:\n";
  for (const auto& [name, count] : st.predicate_counts) os << "  " << std::left << std::setw(12) << name << count << '\n';
  os << "duration / overlap histogram:\n";
  for (std::size_t b = 0; b < st.duration_histogram.size(); ++b) {
    os << "  [" << std::fixed << std::setprecision(1) << b / 10.0 << ", " << (b + 1) / 10.0 << ") "
       << st.duration_histogram[b] << '\n';
  }
  return os.str();
}

}  // namespace vrdone
