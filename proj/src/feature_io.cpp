#include "vrdone/feature_io.hpp"

#include "vrdone/data.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace vrdone {

static_assert(std::endian::native == std::endian::little, "feature container assumes little endian");

namespace {

constexpr std::array<char, 8> kMagic{'V', 'R', 'D', 'F', 'E', 'A', 'T', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError(path.string() + ": truncated feature container");
  }
  return v;
}

void write_entry(std::ofstream& out, std::uint8_t kind, int id, const Matrix& m) {
  put<std::uint8_t>(out, kind);
  put<std::int32_t>(out, id);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

}  // namespace

FeatureContainer read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open feature container");
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError(path.string() + ": bad feature container magic");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFeatureContainerVersion) {
    throw DataError(path.string() + ": unsupported feature container version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, path);
  FeatureContainer fc;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto kind = get<std::uint8_t>(in, path);
    const auto id = get<std::int32_t>(in, path);
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    if (kind > 1) throw DataError(path.string() + ": entry " + std::to_string(e) + " has unknown kind");
    std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw DataError(path.string() + ": truncated data for entity " + std::to_string(id));
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < buf.size(); ++i) m.data()[i] = buf[i];
    auto& target = kind == 0 ? fc.visual : fc.extra;
    if (!target.emplace(id, std::move(m)).second) {
      throw DataError(path.string() + ": duplicate entry for entity " + std::to_string(id));
    }
  }
  return fc;
}

void write_features(const FeatureContainer& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot write feature container");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kFeatureContainerVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(features.visual.size() + features.extra.size()));
  for (const auto& [id, m] : features.visual) write_entry(out, 0, id, m);
  for (const auto& [id, m] : features.extra) write_entry(out, 1, id, m);
  if (!out) throw DataError(path.string() + ": write failed");
}

}  // namespace vrdone
