// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avattn/audio_features.hpp"
#include "avattn/data.hpp"
#include "avattn/model.hpp"

namespace avattn {

/// A fully loaded chunk: pixels, raw (unnormalised) filterbank features and
/// centre-frame supervision.
struct Sample {
  std::string id;  // "<clip_id>@<start>"
  std::string clip_id;
  Split split = Split::kTrain;
  std::vector<Image> frames;
  FilterbankFeatures audio_features;
  Vector6d headpose = Vector6d::Zero();          // pseudo label, raw units
  Eigen::Vector3d gaze = kFrontalAxis;           // pseudo label
  std::optional<Eigen::Vector3d> gt_gaze;        // from the task label, when present
  std::optional<int> zone;

  bool has_visual() const { return !frames.empty(); }
  bool has_audio() const { return audio_features.num_frames() > 0; }
};

std::string SampleId(const ChunkSpan& span);

Sample MakeSample(const FrameChunk& chunk, Split split, const FilterbankConfig& fbank);

struct DatasetOptions {
  int resolution = 64;
  FilterbankConfig fbank;
};

/// Loads every listed chunk; each clip's audio is decoded once.
std::vector<Sample> LoadSamples(std::span<const ManifestEntry> entries, std::span<const ChunkRecord> records,
                                const DatasetOptions& options);

/// Fitted over the training split only.
NormStats FitAudioNorm(std::span<const Sample> samples);

std::vector<Sample> SelectSplit(std::span<const Sample> samples, Split split);

ModelInput MakeModelInput(const Sample& sample, const NormStats& audio_norm);

}  // namespace avattn
