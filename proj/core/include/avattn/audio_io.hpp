// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "avattn/audio_features.hpp"

namespace avattn {

enum class WavEncoding { kPcm16, kFloat32 };

/// Reads 16-bit PCM or 32-bit IEEE float RIFF/WAVE; channels are averaged.
AudioClip ReadWav(const std::filesystem::path& path);
void WriteWav(const std::filesystem::path& path, const AudioClip& clip,
              WavEncoding encoding = WavEncoding::kFloat32);

// Feature matrix file: "AVFB" magic, u32 version, u32 rows, u32 cols, then
// rows*cols little-endian float32 values in row-major order.
inline constexpr std::uint32_t kFeatureFileVersion = 1;

struct FeatureFileMeta {
  int sample_rate = 0;
  std::string config_hash;
};

void WriteFeatureFile(const std::filesystem::path& path, const FilterbankFeatures& features,
                      const FeatureFileMeta& meta);
/// Reads the matrix; frame_times are restored from the sidecar when present.
FilterbankFeatures ReadFeatureFile(const std::filesystem::path& path, FeatureFileMeta* meta = nullptr);

/// Sidecar path for a feature file: `<path>.json`.
std::filesystem::path FeatureSidecarPath(const std::filesystem::path& path);

}  // namespace avattn
