// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "avattn/checkpoint.hpp"
#include "avattn/dataset.hpp"
#include "avattn/geometry.hpp"
#include "avattn/model.hpp"
#include "avattn/nn.hpp"

namespace avattn {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 0;
  double modality_drop_prob = 0.2;
  LossWeights loss_weights;
  double grad_clip_norm = 5.0;
  bool use_headpose_loss = true;
  bool use_gaze_loss = true;
  /// When set, every step uses this mask and no modality dropout happens.
  std::optional<ModalityMask> fixed_mask;
  int checkpoint_every = 1;  // epochs between periodic checkpoints; 0 disables
  int log_every = 10;        // steps between progress lines

  void Validate() const;
  std::string Canonical() const;
};

/// Drops each side with probability p; a draw that drops both is redrawn.
ModalityMask SampleModalityMask(std::mt19937_64& rng, double drop_prob);

/// Disabled loss terms are absent rather than zero.
struct StepLosses {
  std::optional<double> l_hp;
  std::optional<double> l_pg;
  double l_total = 0.0;
  ModalityMask mask;
  double grad_norm = 0.0;  // before clipping
};

/// Inputs shared by every step: normalisation used to build targets.
struct TrainContext {
  NormStats audio_norm;
  LabelNormStats label_norm;
};

/// Computes losses and accumulates gradients for a batch without updating.
StepLosses ComputeBatchGradients(AvModel& model, std::span<const Sample* const> batch, const ModalityMask& mask,
                                 const TrainConfig& cfg, const TrainContext& ctx);

/// One optimisation step: sample a mask, forward/backward, clip, Adam update.
StepLosses TrainStep(AvModel& model, nn::Adam& optimizer, std::span<const Sample* const> batch,
                     const TrainConfig& cfg, const TrainContext& ctx, std::mt19937_64& rng, long step = 0);

struct StepRecord {
  long step = 0;
  int epoch = 0;
  StepLosses losses;
};

struct EpochRecord {
  int epoch = 0;
  double mean_total = 0.0;
  std::optional<double> val_gaze_deg;
  std::optional<double> val_headpose_mse;
  std::array<long, 3> mask_counts{};  // av, visual, audio
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty keeps everything in memory
  std::optional<std::filesystem::path> resume_from;
  std::ostream* progress = nullptr;
  FilterbankConfig fbank;  // recorded in the checkpoint
  /// Head-pose normalisation; fitted on the training split when absent.
  std::optional<LabelNormStats> label_norm;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

/// Trains on the training split of `samples`; the test split, when present,
/// feeds the per-epoch validation metrics. Writes `checkpoint.ckpt`,
/// `checkpoints/epoch_NNNN.ckpt` and `train_log.jsonl` under out_dir.
TrainResult Train(const ModelConfig& model_config, const TrainConfig& cfg, std::span<const Sample> samples,
                  const TrainOptions& options);

/// Mean gaze angular error (degrees) of the model's own gaze head.
double MeanGazeError(const AvModel& model, std::span<const Sample> samples, const NormStats& audio_norm,
                     const ModalityMask& mask);

}  // namespace avattn
