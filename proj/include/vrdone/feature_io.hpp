#pragma once

#include "vrdone/autograd.hpp"

#include <filesystem>
#include <map>

namespace vrdone {

/// Binary per-video feature container.
///
/// Layout (little endian): magic "VRDFEAT1", u32 version, u32 entry count,
/// then per entry: u8 kind (0 visual, 1 extra), i32 entity_id, u32 rows,
/// u32 cols, rows*cols float32 values in row-major order. Entries are written
/// sorted by (kind, entity_id).
struct FeatureContainer {
  std::map<int, Matrix> visual;
  std::map<int, Matrix> extra;
};

inline constexpr std::uint32_t kFeatureContainerVersion = 1;

FeatureContainer read_features(const std::filesystem::path& path);
void write_features(const FeatureContainer& features, const std::filesystem::path& path);

}  // namespace vrdone
