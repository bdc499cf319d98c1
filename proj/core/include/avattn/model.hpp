// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

// The cascaded audio-visual network.
//
//   frames (7) --residual CNN--> 7 x visual_feat_dim --BiLSTM + FC--> z_v
//   filterbank (T x 40) --mean pool, FC, ReLU, FC--> z_a
//   [z_v | z_a | mask bits] --FC, ReLU, FC--> z'   (embedding)
//   z' --linear--> h' (6)      [h' | z'] --linear--> g' (3)
//
// A disabled modality contributes zeros and its encoder is never run, so
// its parameters receive exactly zero gradient.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "avattn/audio_features.hpp"
#include "avattn/geometry.hpp"
#include "avattn/image.hpp"
#include "avattn/nn.hpp"

namespace avattn {

enum class BackboneDepth { kSmall, kFull };

struct ModelConfig {
  int visual_feat_dim = 256;
  int audio_embed_dim = 256;
  int temporal_hidden = 128;  // per direction
  int fused_dim = 256;
  int input_resolution = 64;
  int headpose_dim = 6;
  int gaze_dim = 3;
  int audio_input_dim = 40;
  int chunk_len = 7;
  BackboneDepth depth = BackboneDepth::kSmall;
  int conv_width = 0;  // first-stage channels; 0 picks 8 (small) or 64 (full)

  int ResolvedConvWidth() const;
  int BlocksPerStage() const { return depth == BackboneDepth::kFull ? 2 : 1; }
  void Validate() const;
  /// Canonical text used for hashing and checkpoint validation.
  std::string Canonical() const;
  std::string Hash() const;

  /// 8x8 inputs and widths of 8, for finite-difference checks.
  static ModelConfig Tiny();
};

struct ModalityMask {
  bool use_visual = true;
  bool use_audio = true;

  void Validate() const;
  std::string Name() const;  // "av", "visual" or "audio"
  static ModalityMask Parse(const std::string& name);
  static constexpr ModalityMask AudioVisual() { return {true, true}; }
  static constexpr ModalityMask VisualOnly() { return {true, false}; }
  static constexpr ModalityMask AudioOnly() { return {false, true}; }
  bool operator==(const ModalityMask&) const = default;
};

/// Network-ready inputs for one chunk. Either part may be empty when the
/// modality is unavailable.
struct ModelInput {
  std::vector<nn::FeatureMap> frames;
  Eigen::MatrixXd audio;  // T x audio_input_dim, normalised

  bool has_visual() const { return !frames.empty(); }
  bool has_audio() const { return audio.rows() > 0; }
};

/// Pixel values mapped to [-0.5, 0.5], channel-planar.
nn::FeatureMap ImageToFeatureMap(const Image& image);

struct ForwardOutput {
  Vector6d headpose;
  Eigen::Vector3d gaze;
  Eigen::VectorXd embedding;
};

struct ForwardBatchOutput {
  Eigen::MatrixXd headpose;   // B x 6
  Eigen::MatrixXd gaze;       // B x 3
  Eigen::MatrixXd embedding;  // B x fused_dim
};

class ForwardTape;

class AvModel {
 public:
  AvModel() = default;
  static AvModel Create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// One visual_feat_dim row per frame; frames share the encoder.
  Eigen::MatrixXd EncodeFrames(std::span<const nn::FeatureMap> frames) const;
  std::vector<Eigen::MatrixXd> EncodeFramesBatch(std::span<const std::vector<nn::FeatureMap>> batch) const;
  Eigen::VectorXd EncodeSequence(const Eigen::MatrixXd& per_frame) const;
  Eigen::VectorXd EncodeAudio(const Eigen::MatrixXd& features) const;
  Eigen::VectorXd Fuse(const Eigen::VectorXd& z_visual, const Eigen::VectorXd& z_audio,
                       const ModalityMask& mask) const;
  Vector6d PredictHeadpose(const Eigen::VectorXd& embedding) const;
  Eigen::Vector3d PredictGaze(const Vector6d& headpose, const Eigen::VectorXd& embedding) const;

  ForwardOutput Forward(const ModelInput& input, const ModalityMask& mask) const;
  /// Records intermediate values in `tape` for a later Backward.
  ForwardOutput Forward(const ModelInput& input, const ModalityMask& mask, ForwardTape& tape) const;
  ForwardBatchOutput ForwardBatch(std::span<const ModelInput> inputs, const ModalityMask& mask) const;

  /// Accumulates dL/dparams into params().grad given dL/dh' and dL/dg'.
  void Backward(const ForwardTape& tape, const Vector6d& d_headpose, const Eigen::Vector3d& d_gaze);

  /// SHA-256 of the backbone (feature-embedding) parameters.
  std::string BackboneHash() const;

  static constexpr const char* kVisualPrefix = "visual.";
  static constexpr const char* kTemporalPrefix = "temporal.";
  static constexpr const char* kAudioPrefix = "audio.";
  static constexpr const char* kFusionPrefix = "fusion.";
  static constexpr const char* kHeadPosePrefix = "head_pose.";
  static constexpr const char* kHeadGazePrefix = "head_gaze.";

  struct ResidualBlock {
    nn::Conv2d conv1;
    nn::Conv2d conv2;
    bool projection = false;
    nn::Conv2d shortcut;
  };
  struct FrameTape;

 private:

  Eigen::VectorXd EncodeFrame(const nn::FeatureMap& frame, FrameTape* tape) const;
  void BackwardFrame(const FrameTape& tape, const Eigen::VectorXd& d_feature);
  ForwardOutput ForwardImpl(const ModelInput& input, const ModalityMask& mask, ForwardTape* tape) const;

  ModelConfig config_;
  nn::ParameterSet params_;
  nn::Conv2d stem_;
  std::vector<ResidualBlock> blocks_;
  nn::Linear visual_fc_;
  nn::Lstm lstm_forward_;
  nn::Lstm lstm_backward_;
  nn::Linear temporal_fc_;
  nn::Linear audio_fc1_;
  nn::Linear audio_fc2_;
  nn::Linear fusion_fc1_;
  nn::Linear fusion_fc2_;
  nn::Linear head_pose_;
  nn::Linear head_gaze_;
};

/// Intermediate activations of one forward pass.
class ForwardTape {
 public:
  ForwardTape();
  ~ForwardTape();
  ForwardTape(ForwardTape&&) noexcept;
  ForwardTape& operator=(ForwardTape&&) noexcept;

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace avattn
