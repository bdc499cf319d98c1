// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

// Synthetic audio-visual world with known head pose and gaze.
//
// Head pose follows a bounded random walk; gaze adds a slowly varying eye
// offset. Frames render a parametric face whose nose marker tracks head
// yaw/pitch and whose pupils track the eye offset. Audio is a harmonic tone
// whose first formant rises with yaw and second formant with pitch, so coarse
// pose is audible while the eye offset is visible only.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "avattn/audio_features.hpp"
#include "avattn/data.hpp"
#include "avattn/dataset.hpp"
#include "avattn/geometry.hpp"
#include "avattn/image.hpp"

namespace avattn {

struct WorldConfig {
  std::uint64_t seed = 0;
  int n_clips = 10;
  int frames_per_clip = 14;
  double fps = 25.0;
  int sample_rate = 16000;
  double pose_walk_scale = 0.02;  // yaw step std, radians/frame; pitch and roll scale with their ranges
  double eye_offset_scale = 0.1;  // radians
  int image_size = 64;
  double yaw_range = 1.0;  // |yaw| bound, radians
  double pitch_range = 0.5;
  double roll_range = 0.25;
  double audio_noise = 0.01;  // white-noise std relative to full scale

  void Validate() const;
};

/// First and second formant frequencies (Hz) for a head orientation.
double Formant1Hz(double yaw, const WorldConfig& cfg);
double Formant2Hz(double pitch, const WorldConfig& cfg);

/// 3x3 grid over gaze pitch (rows, top = up) and yaw (columns); 1..9.
int GazeZone(const PitchYaw& gaze, const WorldConfig& cfg);

struct SynthClip {
  ManifestEntry entry;  // paths empty until written; labels are exact
  std::vector<Image> frames;
  AudioClip audio;
  std::vector<HeadPose6D> headpose;
  std::vector<PitchYaw> head_angles;  // head pitch/yaw per frame
  std::vector<PitchYaw> eye_offset;
  std::vector<PitchYaw> gaze;
};

std::string SynthClipId(int clip_index);

SynthClip GenerateClip(const WorldConfig& cfg, int clip_index);

struct World {
  WorldConfig config;
  std::vector<SynthClip> clips;
};

World GenerateWorld(const WorldConfig& cfg);

/// Writes PNG frames, float WAV audio, manifest.jsonl (with oracle pseudo
/// labels) and pseudo_labels.csv under dir. Returns the manifest path.
std::filesystem::path WriteWorld(const World& world, const std::filesystem::path& dir, double label_noise = 0.0);

/// Ground-truth labels, optionally corrupted by zero-mean Gaussian noise that
/// is a pure function of (seed, clip, frame).
class OracleProvider final : public PseudoLabelProvider {
 public:
  OracleProvider(const World& world, double noise_std = 0.0, std::uint64_t noise_seed = 0);

  std::optional<HeadPose6D> Headpose(const std::string& clip_id, int frame) const override;
  std::optional<GazeVector> Gaze(const std::string& clip_id, int frame) const override;

 private:
  struct Clip {
    std::vector<HeadPose6D> headpose;
    std::vector<PitchYaw> gaze;
  };
  const Clip& Find(const std::string& clip_id, int frame) const;
  std::vector<double> Noise(const std::string& clip_id, int frame, int salt, int count) const;

  std::map<std::string, Clip> clips_;
  double noise_std_;
  std::uint64_t noise_seed_;
};

struct WorldSamplesOptions {
  ChunkOptions chunks;
  double test_fraction = 0.2;
  FilterbankConfig fbank;
  double label_noise = 0.0;
};

/// In-memory equivalent of writing the world and running the chunk pipeline.
/// Label normalisation is fitted over every labelled frame.
std::vector<Sample> WorldSamples(const World& world, const WorldSamplesOptions& options,
                                 LabelNormStats* label_norm = nullptr);

}  // namespace avattn
