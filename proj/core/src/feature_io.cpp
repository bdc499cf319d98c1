// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <iterator>
#include <vector>

#include <json.hpp>

#include "avattn/audio_io.hpp"
#include "avattn/error.hpp"

namespace avattn {
namespace {

constexpr char kMagic[4] = {'A', 'V', 'F', 'B'};

void PutU32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

}  // namespace

std::filesystem::path FeatureSidecarPath(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void WriteFeatureFile(const std::filesystem::path& path, const FilterbankFeatures& features,
                      const FeatureFileMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, fmt::format("features: cannot write {}", path.string()));
  out.write(kMagic, 4);
  PutU32(out, kFeatureFileVersion);
  PutU32(out, static_cast<std::uint32_t>(features.num_frames()));
  PutU32(out, static_cast<std::uint32_t>(features.num_filters()));
  for (Eigen::Index t = 0; t < features.num_frames(); ++t) {
    for (Eigen::Index j = 0; j < features.num_filters(); ++j) {
      const auto v = static_cast<float>(features.values(t, j));
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }

  nlohmann::ordered_json side;
  side["format"] = "avattn-fbank";
  side["version"] = kFeatureFileVersion;
  side["sample_rate"] = meta.sample_rate;
  side["config_hash"] = meta.config_hash;
  side["frames"] = features.num_frames();
  side["filters"] = features.num_filters();
  side["frame_times"] = features.frame_times;
  std::ofstream s(FeatureSidecarPath(path), std::ios::trunc);
  if (!s) Fail(ErrorKind::kIo, fmt::format("features: cannot write sidecar for {}", path.string()));
  s << side.dump(2) << '\n';
}

FilterbankFeatures ReadFeatureFile(const std::filesystem::path& path, FeatureFileMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, fmt::format("features: cannot open {}", path.string()));
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    Fail(ErrorKind::kParse, fmt::format("features: {} is not a feature file", path.string()));
  }
  std::uint32_t version, rows, cols;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&rows, bytes.data() + 8, 4);
  std::memcpy(&cols, bytes.data() + 12, 4);
  if (version != kFeatureFileVersion) {
    Fail(ErrorKind::kParse, fmt::format("features: {} has unsupported version {}", path.string(), version));
  }
  if (bytes.size() != 16 + static_cast<std::size_t>(rows) * cols * 4) {
    Fail(ErrorKind::kParse, fmt::format("features: {} has a truncated payload", path.string()));
  }
  FilterbankFeatures f;
  f.values.resize(rows, cols);
  const char* p = bytes.data() + 16;
  for (std::uint32_t t = 0; t < rows; ++t) {
    for (std::uint32_t j = 0; j < cols; ++j, p += 4) {
      float v;
      std::memcpy(&v, p, 4);
      f.values(t, j) = v;
    }
  }

  std::ifstream s(FeatureSidecarPath(path));
  if (s) {
    const auto side = nlohmann::json::parse(s, nullptr, /*allow_exceptions=*/false);
    if (side.is_discarded()) {
      Fail(ErrorKind::kParse, fmt::format("features: malformed sidecar for {}", path.string()));
    }
    if (side.contains("frame_times")) f.frame_times = side["frame_times"].get<std::vector<double>>();
    if (meta != nullptr) {
      meta->sample_rate = side.value("sample_rate", 0);
      meta->config_hash = side.value("config_hash", std::string());
    }
  }
  return f;
}

}  // namespace avattn
