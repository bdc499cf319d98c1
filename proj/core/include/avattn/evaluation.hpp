// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "avattn/dataset.hpp"
#include "avattn/model.hpp"
#include "avattn/training.hpp"

namespace avattn {

inline constexpr int kNumZones = 9;

/// Frozen-backbone embeddings z' with their evaluation labels.
struct EmbeddingSet {
  std::vector<std::string> ids;
  Eigen::MatrixXd embeddings;             // N x fused_dim
  std::vector<Eigen::Vector3d> gaze;      // ground truth when known, else the pseudo label
  std::vector<Vector6d> headpose;         // raw units
  std::vector<std::optional<int>> zones;  // 1..9
  std::vector<ModalityMask> modality_used;

  std::size_t size() const { return ids.size(); }
};

struct ExtractionReport {
  std::vector<std::string> skipped;  // samples lacking data for the requested mask
  std::string hash_before;
  std::string hash_after;
};

/// Samples whose data cannot satisfy `mask` are skipped and reported.
EmbeddingSet ExtractEmbeddings(const AvModel& model, std::span<const Sample> samples, const NormStats& audio_norm,
                               const ModalityMask& mask, ExtractionReport* report = nullptr);

enum class ProbeTask { kGaze, kHeadpose, kZone };

std::string_view ToString(ProbeTask task);
ProbeTask ParseProbeTask(const std::string& name);

struct ProbeOptions {
  int epochs = 100;
  double learning_rate = 1e-2;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

/// A single linear map from the embedding to the task output.
struct ProbeHead {
  ProbeTask task = ProbeTask::kGaze;
  Eigen::MatrixXd weight;  // out x fused_dim
  Eigen::VectorXd bias;

  Eigen::VectorXd Apply(const Eigen::VectorXd& z) const { return weight * z + bias; }
};

struct ProbeResult {
  ProbeHead head;
  /// Mean angular error in degrees (gaze), MSE (head-pose) or accuracy in percent (zones).
  double metric = 0.0;
  Eigen::MatrixXd test_outputs;  // one row per evaluated test sample
  std::vector<std::string> test_ids;
};

ProbeResult LinearProbe(const EmbeddingSet& train, const EmbeddingSet& test, ProbeTask task,
                        const ProbeOptions& options = {});

struct KnnOptions {
  int k = 20;
  double temperature = 0.07;
  bool uniform_weights = false;  // equal votes instead of exp(sim / T)
};

struct KnnResult {
  std::vector<int> predictions;
  double accuracy = 0.0;  // percent; 0 when no test labels are given
};

/// Cosine-similarity kNN; class score is the sum of neighbour weights, ties go
/// to the lowest class id.
KnnResult WeightedKnn(const Eigen::MatrixXd& train, std::span<const int> train_labels, const Eigen::MatrixXd& test,
                      std::span<const int> test_labels, const KnnOptions& options = {});
/// Zone classification over samples carrying a zone label.
KnnResult WeightedKnn(const EmbeddingSet& train, const EmbeddingSet& test, const KnnOptions& options = {});

struct GazeMetrics {
  double all = 0.0;
  std::optional<double> front_180;
  std::optional<double> front_facing;
  std::size_t n_all = 0;
  std::size_t n_front_180 = 0;
  std::size_t n_front_facing = 0;
};

GazeMetrics ComputeGazeMetrics(std::span<const Eigen::Vector3d> preds, std::span<const Eigen::Vector3d> gts);

struct AblationRow {
  std::string name;
  bool pseudo_gaze = false;
  bool headpose = false;
  bool audio = false;
  bool visual = false;
  std::optional<GazeMetrics> gaze;  // absent when the cell failed
  std::string error;
  std::string backbone_hash;
};

/// The five loss/modality configurations: PG, HP, Audio, PG+HP, PG+HP+Audio.
std::vector<AblationRow> AblationRows();

struct AblationOptions {
  std::filesystem::path out_dir;  // per-cell training artefacts; empty keeps them in memory
  std::ostream* progress = nullptr;
  ProbeOptions probe;
  FilterbankConfig fbank;
  std::optional<LabelNormStats> label_norm;
};

/// Trains each configuration and reports the linear-probe gaze error on the
/// test split. A failing cell records its error and the grid continues.
std::vector<AblationRow> RunAblationGrid(const ModelConfig& model_config, const TrainConfig& base,
                                         std::span<const Sample> samples, const AblationOptions& options);

}  // namespace avattn
