#include "vrdone/data.hpp"

#include "vrdone/feature_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace vrdone {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(path + "." + key + ": missing field");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw DataError(path + "." + key + ": " + e.what());
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << j.dump(1) << '\n';
  if (!out) throw DataError(path.string() + ": write failed");
}

json box_to_json(const BBox& b) { return json::array({b.x_c, b.y_c, b.w, b.h}); }

}  // namespace

const Tracklet* VideoRecord::find(int entity_id) const {
  for (const auto& t : tracklets)
    if (t.entity_id == entity_id) return &t;
  return nullptr;
}

void validate_video(const VideoRecord& v) {
  const std::string where = "video " + v.video_id;
  if (v.video_id.empty()) throw DataError("video_id: must be non-empty");
  if (!(v.frame_w > 0) || !(v.frame_h > 0)) throw DataError(where + ": frame size must be positive");
  if (v.sample_stride < 1) throw DataError(where + ": sample_stride must be >= 1");
  std::set<int> ids;
  Index feature_dim = -1;
  for (std::size_t i = 0; i < v.tracklets.size(); ++i) {
    const Tracklet& t = v.tracklets[i];
    const std::string tp = where + ": tracklets[" + std::to_string(i) + "] (entity " +
                           std::to_string(t.entity_id) + ")";
    if (!ids.insert(t.entity_id).second) throw DataError(tp + ": duplicate entity_id");
    if (t.boxes.empty()) throw DataError(tp + ": boxes must be non-empty");
    if (t.start_frame < 0) throw DataError(tp + ": start_frame must be >= 0");
    if (!(t.confidence >= 0.0 && t.confidence <= 1.0)) throw DataError(tp + ": confidence outside [0,1]");
    for (std::size_t f = 0; f < t.boxes.size(); ++f) {
      const BBox& b = t.boxes[f];
      if (!b.valid()) {
        throw DataError(tp + ".boxes[" + std::to_string(f) + "] (frame " +
                        std::to_string(t.start_frame + static_cast<int>(f)) +
                        "): box must be finite with positive width and height");
      }
    }
    if (t.has_features() && t.features.rows() != t.length()) {
      throw DataError(tp + ": feature rows (" + std::to_string(t.features.rows()) +
                      ") differ from box count (" + std::to_string(t.length()) + ")");
    }
    if (!t.has_features()) continue;
    if (feature_dim >= 0 && t.features.cols() != feature_dim) throw DataError(tp + ": inconsistent feature width");
    feature_dim = t.features.cols();
    if (t.extra.size() != 0 && t.extra.rows() != t.length()) throw DataError(tp + ": extra feature rows differ from box count");
  }
  for (std::size_t r = 0; r < v.relations.size(); ++r) {
    const auto& rel = v.relations[r];
    const std::string rp = where + ": relations[" + std::to_string(r) + "]";
    const Tracklet* s = v.find(rel.subject_id);
    const Tracklet* o = v.find(rel.object_id);
    if (!s) throw DataError(rp + ": unknown subject_id " + std::to_string(rel.subject_id));
    if (!o) throw DataError(rp + ": unknown object_id " + std::to_string(rel.object_id));
    if (rel.subject_id == rel.object_id) throw DataError(rp + ": subject and object must differ");
    if (rel.predicate < 0) throw DataError(rp + ": predicate must be >= 0");
    if (rel.span.begin > rel.span.end) throw DataError(rp + ": begin > end");
    auto ov = temporal_overlap(*s, *o);
    if (!ov || rel.span.begin < ov->begin || rel.span.end > ov->end) {
      throw DataError(rp + ": span outside the subject/object overlap");
    }
  }
}

VideoRecord load_video(const fs::path& manifest_path) {
  const json j = read_json(manifest_path);
  const std::string p = manifest_path.filename().string();
  VideoRecord v;
  const int version = field<int>(j, "schema_version", p);
  if (version != kManifestSchemaVersion) throw DataError(p + ".schema_version: unsupported version " + std::to_string(version));
  v.video_id = field<std::string>(j, "video_id", p);
  v.frame_w = field<double>(j, "frame_w", p);
  v.frame_h = field<double>(j, "frame_h", p);
  v.sample_stride = field<int>(j, "sample_stride", p);
  std::string box_format = "cxcywh";
  if (j.contains("box_format")) box_format = field<std::string>(j, "box_format", p);
  if (box_format != "cxcywh" && box_format != "xyxy") throw DataError(p + ".box_format: expected cxcywh or xyxy");

  if (!j.contains("tracklets")) throw DataError(p + ".tracklets: missing field");
  const json& tracks = j.at("tracklets");
  if (!tracks.is_array()) throw DataError(p + ".tracklets: expected an array");
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const std::string tp = p + ".tracklets[" + std::to_string(i) + "]";
    const json& tj = tracks[i];
    Tracklet t;
    t.entity_id = field<int>(tj, "entity_id", tp);
    t.category = field<std::string>(tj, "category", tp);
    t.start_frame = field<int>(tj, "start_frame", tp);
    t.confidence = field<double>(tj, "confidence", tp);
    const auto boxes = field<std::vector<std::vector<double>>>(tj, "boxes", tp);
    for (std::size_t f = 0; f < boxes.size(); ++f) {
      const auto& b = boxes[f];
      if (b.size() != 4) throw DataError(tp + ".boxes[" + std::to_string(f) + "]: expected 4 numbers");
      BBox box = box_format == "xyxy" ? BBox::from_corners(b[0], b[1], b[2], b[3]) : BBox{b[0], b[1], b[2], b[3]};
      if (!box.valid()) {
        throw DataError(tp + ".boxes[" + std::to_string(f) + "] (entity " + std::to_string(t.entity_id) +
                        ", frame " + std::to_string(t.start_frame + static_cast<int>(f)) +
                        "): box must be finite with positive width and height");
      }
      t.boxes.push_back(box);
    }
    v.tracklets.push_back(std::move(t));
  }
  if (j.contains("relations")) {
    const json& rels = j.at("relations");
    if (!rels.is_array()) throw DataError(p + ".relations: expected an array");
    for (std::size_t r = 0; r < rels.size(); ++r) {
      const std::string rp = p + ".relations[" + std::to_string(r) + "]";
      RelationAnnotation a;
      a.subject_id = field<int>(rels[r], "subject_id", rp);
      a.object_id = field<int>(rels[r], "object_id", rp);
      a.predicate = field<int>(rels[r], "predicate", rp);
      a.span = {field<int>(rels[r], "begin", rp), field<int>(rels[r], "end", rp)};
      v.relations.push_back(a);
    }
  }

  fs::path feat_path = manifest_path;
  feat_path.replace_extension(".feat");
  FeatureContainer fc = read_features(feat_path);
  for (auto& t : v.tracklets) {
    auto it = fc.visual.find(t.entity_id);
    if (it == fc.visual.end()) continue;  // reported per pair by the consumers
    t.features = std::move(it->second);
    auto ex = fc.extra.find(t.entity_id);
    if (ex != fc.extra.end()) t.extra = std::move(ex->second);
  }
  validate_video(v);
  return v;
}

void save_video(const VideoRecord& v, const fs::path& dir) {
  validate_video(v);
  json tracks = json::array();
  FeatureContainer fc;
  for (const auto& t : v.tracklets) {
    json boxes = json::array();
    for (const auto& b : t.boxes) boxes.push_back(box_to_json(b));
    tracks.push_back({{"entity_id", t.entity_id},
                      {"category", t.category},
                      {"start_frame", t.start_frame},
                      {"confidence", t.confidence},
                      {"boxes", std::move(boxes)}});
    fc.visual[t.entity_id] = t.features;
    if (t.extra.size() != 0) fc.extra[t.entity_id] = t.extra;
  }
  json rels = json::array();
  for (const auto& r : v.relations) {
    rels.push_back({{"subject_id", r.subject_id},
                    {"object_id", r.object_id},
                    {"predicate", r.predicate},
                    {"begin", r.span.begin},
                    {"end", r.span.end}});
  }
  json j = {{"schema_version", kManifestSchemaVersion},
            {"video_id", v.video_id},
            {"frame_w", v.frame_w},
            {"frame_h", v.frame_h},
            {"sample_stride", v.sample_stride},
            {"box_format", "cxcywh"},
            {"tracklets", std::move(tracks)},
            {"relations", std::move(rels)}};
  fs::create_directories(dir);
  write_json(j, dir / (v.video_id + ".json"));
  write_features(fc, dir / (v.video_id + ".feat"));
}

DatasetIndex load_index(const fs::path& dir) {
  const fs::path path = dir / "dataset.json";
  const json j = read_json(path);
  const std::string p = "dataset.json";
  const int version = field<int>(j, "schema_version", p);
  if (version != kManifestSchemaVersion) throw DataError(p + ".schema_version: unsupported version");
  DatasetIndex idx;
  idx.predicates = field<std::vector<std::string>>(j, "predicates", p);
  idx.feature_dim = field<Index>(j, "feature_dim", p);
  if (j.contains("extra_dim")) idx.extra_dim = field<Index>(j, "extra_dim", p);
  idx.video_ids = field<std::vector<std::string>>(j, "videos", p);
  return idx;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.index = load_index(dir);
  const int num_predicates = static_cast<int>(ds.index.predicates.size());
  for (const auto& id : ds.index.video_ids) {
    VideoRecord v = load_video(dir / (id + ".json"));
    if (v.video_id != id) throw DataError(id + ".json: video_id field is '" + v.video_id + "'");
    for (const auto& t : v.tracklets) {
      if (t.has_features() && t.features.cols() != ds.index.feature_dim) {
        throw DataError(id + ": entity " + std::to_string(t.entity_id) + " feature width " +
                        std::to_string(t.features.cols()) + " differs from dataset feature_dim " +
                        std::to_string(ds.index.feature_dim));
      }
    }
    for (const auto& r : v.relations) {
      if (r.predicate >= num_predicates) {
        throw DataError(id + ": predicate index " + std::to_string(r.predicate) + " outside vocabulary");
      }
    }
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json ids = json::array();
  for (const auto& v : ds.videos) {
    save_video(v, dir);
    ids.push_back(v.video_id);
  }
  json j = {{"schema_version", kManifestSchemaVersion},
            {"predicates", ds.index.predicates},
            {"feature_dim", ds.index.feature_dim},
            {"extra_dim", ds.index.extra_dim},
            {"videos", std::move(ids)}};
  write_json(j, dir / "dataset.json");
}

int PairSample::valid_count() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

RowVector rasterize(const TemporalSpan& span, int origin, Index length) {
  RowVector row = RowVector::Zero(length);
  for (int f = std::max(span.begin, origin); f <= span.end; ++f) {
    const Index t = f - origin;
    if (t >= length) break;
    row(t) = 1.0;
  }
  return row;
}

PairSample make_pair_sample(const VideoRecord& v, const Tracklet& subject, const Tracklet& object,
                            const TemporalSpan& span, Index padded_len) {
  const Index n = span.length();
  if (padded_len < n) throw std::invalid_argument("make_pair_sample: padded length shorter than span");
  PairSample p;
  p.subject_id = subject.entity_id;
  p.object_id = object.entity_id;
  p.span = span;
  p.valid = Mask(static_cast<std::size_t>(padded_len), 0);
  std::fill_n(p.valid.begin(), n, 1);

  auto slice = [&](const Tracklet& t, const Matrix& m) {
    Matrix out = Matrix::Zero(padded_len, m.cols());
    out.topRows(n) = m.middleRows(span.begin - t.start_frame, n);
    return out;
  };
  auto pad = [&](const Matrix& m) {
    Matrix out = Matrix::Zero(padded_len, m.cols());
    out.topRows(n) = m;
    return out;
  };
  p.features_s = slice(subject, subject.features);
  p.features_o = slice(object, object.features);
  if (subject.extra.size() != 0) p.extra_s = slice(subject, subject.extra);
  if (object.extra.size() != 0) p.extra_o = slice(object, object.extra);
  p.theta_a_s = pad(abs_pos_features(subject, v.frame_w, v.frame_h, span));
  p.theta_a_o = pad(abs_pos_features(object, v.frame_w, v.frame_h, span));
  const auto bs = boxes_in_span(subject, span);
  const auto bo = boxes_in_span(object, span);
  p.theta_r = pad(rel_pos_features(bs, bo));
  p.gt.masks = Matrix::Zero(0, padded_len);
  return p;
}

std::vector<PairSample> build_training_pairs(const VideoRecord& v, int max_len, int num_queries,
                                             std::mt19937_64& rng) {
  if (max_len < 1) throw std::invalid_argument("build_training_pairs: max_len must be positive");
  std::map<std::pair<int, int>, std::vector<const RelationAnnotation*>> by_pair;
  for (const auto& r : v.relations) by_pair[{r.subject_id, r.object_id}].push_back(&r);

  std::vector<PairSample> out;
  for (const auto& [ids, rels] : by_pair) {
    const Tracklet* s = v.find(ids.first);
    const Tracklet* o = v.find(ids.second);
    if (!s || !o || !s->has_features() || !o->has_features()) continue;
    auto overlap = temporal_overlap(*s, *o);
    if (!overlap) continue;
    TemporalSpan crop = *overlap;
    if (overlap->length() > max_len) {
      std::uniform_int_distribution<int> offset(0, overlap->length() - max_len);
      crop.begin = overlap->begin + offset(rng);
      crop.end = crop.begin + max_len - 1;
    }
    std::vector<std::pair<int, TemporalSpan>> kept;
    for (const auto* r : rels) {
      if (r->span.length() > 2 * max_len) continue;
      auto clipped = intersect(r->span, crop);
      if (!clipped) continue;
      if (*clipped != r->span && clipped->length() < 2) continue;
      kept.emplace_back(r->predicate, *clipped);
    }
    if (static_cast<int>(kept.size()) > num_queries) continue;

    PairSample p = make_pair_sample(v, *s, *o, crop, max_len);
    p.gt.masks = Matrix::Zero(static_cast<Index>(kept.size()), max_len);
    for (std::size_t j = 0; j < kept.size(); ++j) {
      p.gt.classes.push_back(kept[j].first);
      p.gt.masks.row(static_cast<Index>(j)) = rasterize(kept[j].second, crop.begin, max_len);
    }
    out.push_back(std::move(p));
  }
  return out;
}

InferenceBuckets build_inference_pairs(const VideoRecord& v, double conf_thresh, int max_len) {
  std::vector<const Tracklet*> kept;
  for (const auto& t : v.tracklets)
    if (t.confidence > conf_thresh) kept.push_back(&t);

  std::vector<std::tuple<const Tracklet*, const Tracklet*, TemporalSpan>> regular, longer;
  int longest = 0;
  InferenceBuckets b;
  for (const Tracklet* s : kept) {
    for (const Tracklet* o : kept) {
      if (s == o) continue;
      auto ov = temporal_overlap(*s, *o);
      if (!ov) continue;
      if (!s->has_features() || !o->has_features()) {
        b.skipped.emplace_back(s->entity_id, o->entity_id);
        continue;
      }
      if (ov->length() <= max_len) {
        regular.emplace_back(s, o, *ov);
      } else {
        longer.emplace_back(s, o, *ov);
        longest = std::max(longest, ov->length());
      }
    }
  }
  for (const auto& [s, o, span] : regular) b.regular.push_back(make_pair_sample(v, *s, *o, span, max_len));
  for (const auto& [s, o, span] : longer) b.long_pairs.push_back(make_pair_sample(v, *s, *o, span, longest));
  return b;
}

std::optional<TemporalSpan> mask_to_boundaries(std::span<const double> probs, const Mask& valid,
                                               double thresh) {
  int first = -1, last = -1;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (!valid.empty() && (t >= valid.size() || !valid[t])) continue;
    if (probs[t] > thresh) {
      if (first < 0) first = static_cast<int>(t);
      last = static_cast<int>(t);
    }
  }
  if (first < 0) return std::nullopt;
  return TemporalSpan{first, last};
}

}  // namespace vrdone
