// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

// Versioned checkpoint container:
//   "AVCK" | u32 version | u64 header bytes | JSON header | f64 LE blobs
// Blobs are the parameter values in table order, followed by the Adam first
// and second moments when a training state is present.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "avattn/audio_features.hpp"
#include "avattn/data.hpp"
#include "avattn/model.hpp"
#include "avattn/nn.hpp"

namespace avattn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to continue a run bit-for-bit.
struct TrainState {
  int epoch = 0;  // completed epochs
  long step = 0;
  std::string rng_state;
  nn::Adam optimizer;
};

struct Checkpoint {
  AvModel model;
  FilterbankConfig fbank;
  NormStats audio_norm;
  LabelNormStats label_norm;
  std::uint64_t seed = 0;
  std::string train_config;  // canonical text of the producing TrainConfig
  std::optional<TrainState> train;
};

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Validates the stored model-config hash and the parameter table.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);
/// Additionally requires the stored config to hash equal to `expected`.
Checkpoint LoadCheckpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace avattn
