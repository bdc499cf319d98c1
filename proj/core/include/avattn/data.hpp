// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

// Clip manifests, 7-frame chunk selection with the head-pose stability
// filter, audio alignment and pseudo-label attachment.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avattn/audio_features.hpp"
#include "avattn/geometry.hpp"
#include "avattn/image.hpp"

namespace avattn {

inline constexpr int kManifestVersion = 1;
inline constexpr int kChunkLength = 7;
inline constexpr int kChunkCenter = 3;  // zero-based index of the 4th frame
inline constexpr double kLabelStdFloor = 1e-8;

struct TaskLabel {
  std::optional<int> zone;         // 1..9
  std::optional<PitchYaw> gaze;
};

struct ManifestEntry {
  std::string clip_id;
  std::vector<std::filesystem::path> frame_paths;  // resolved against the manifest directory
  std::filesystem::path audio_path;
  double fps = 25.0;
  int sample_rate = 0;  // 0 when the manifest does not state it
  std::vector<std::pair<long, long>> audio_offsets;  // [start, end) samples per frame
  std::vector<std::optional<HeadPose6D>> pseudo_headpose;  // empty or one per frame
  std::vector<std::optional<GazeVector>> pseudo_gaze;
  std::vector<std::optional<TaskLabel>> task_labels;

  std::size_t num_frames() const { return frame_paths.size(); }
  bool chunk_eligible() const { return num_frames() >= static_cast<std::size_t>(kChunkLength); }
};

struct ManifestIssue {
  int line = 0;
  std::string clip_id;
  std::string message;
};

struct Manifest {
  std::filesystem::path path;
  std::vector<ManifestEntry> entries;
  std::vector<ManifestIssue> issues;  // rejected lines; accepted entries are clean
};

struct ManifestOptions {
  bool check_files = true;
};

/// Parses a JSON-lines manifest. Malformed JSON throws kParse naming the
/// line; schema violations, duplicate ids and missing files are collected in
/// `issues` and the offending lines are dropped.
Manifest LoadManifest(const std::filesystem::path& path, const ManifestOptions& options = {});
/// Writes entries with paths made relative to the manifest directory.
void WriteManifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

struct LabelNormStats {
  Vector6d mean = Vector6d::Zero();
  Vector6d std = Vector6d::Ones();
};

LabelNormStats FitLabelNorm(std::span<const Vector6d> poses);
/// Fits over every labelled frame of every entry.
LabelNormStats FitLabelNorm(std::span<const ManifestEntry> entries);
Vector6d NormalizeHeadpose(const Vector6d& pose, const LabelNormStats& stats);
Vector6d DenormalizeHeadpose(const Vector6d& normalized, const LabelNormStats& stats);

/// A selected window of consecutive frames in one clip.
struct ChunkSpan {
  std::string clip_id;
  int start = 0;
  int length = kChunkLength;

  int center() const { return start + length / 2; }
  bool operator==(const ChunkSpan&) const = default;
};

struct ChunkOptions {
  int chunk_len = kChunkLength;
  double std_threshold = 0.1;
};

/// Largest population standard deviation, over the six pose dimensions, of
/// the normalised head-pose in frames [start, start + len).
double WindowPoseSpread(const ManifestEntry& entry, const LabelNormStats& stats, int start, int len);

/// Non-overlapping windows (stride = chunk_len) whose pose spread is <=
/// std_threshold. Entries without per-frame head-pose are skipped and a
/// warning is appended.
std::vector<ChunkSpan> SelectChunks(const ManifestEntry& entry, const LabelNormStats& stats,
                                    const ChunkOptions& options = {},
                                    std::vector<std::string>* warnings = nullptr);

/// Audio from the first sample of the span's first frame to the end of its
/// last frame. Throws kAlignment when offsets are missing or out of bounds.
AudioClip AlignAudio(const ManifestEntry& entry, const ChunkSpan& span, const AudioClip& clip_audio);

/// Per-frame pseudo-label source. Unknown clip or frame ids throw kLookup;
/// a known frame without a label yields nullopt.
class PseudoLabelProvider {
 public:
  virtual ~PseudoLabelProvider() = default;
  virtual std::optional<HeadPose6D> Headpose(const std::string& clip_id, int frame) const = 0;
  virtual std::optional<GazeVector> Gaze(const std::string& clip_id, int frame) const = 0;
};

/// Labels exported from external teachers as CSV:
/// clip_id,frame_idx,rx,ry,rz,tx,ty,tz[,gx,gy,gz]
class CsvLabelProvider final : public PseudoLabelProvider {
 public:
  static CsvLabelProvider Load(const std::filesystem::path& path);

  std::optional<HeadPose6D> Headpose(const std::string& clip_id, int frame) const override;
  std::optional<GazeVector> Gaze(const std::string& clip_id, int frame) const override;

  struct Row {
    HeadPose6D headpose;
    std::optional<GazeVector> gaze;
  };
  const std::vector<std::pair<std::string, std::vector<std::optional<Row>>>>& clips() const { return clips_; }

 private:
  const std::optional<Row>& Find(const std::string& clip_id, int frame) const;
  std::vector<std::pair<std::string, std::vector<std::optional<Row>>>> clips_;  // sorted by id
};

struct PseudoLabelRow {
  std::string clip_id;
  int frame = 0;
  HeadPose6D headpose;
  std::optional<GazeVector> gaze;
};
void WritePseudoLabelCsv(const std::filesystem::path& path, std::span<const PseudoLabelRow> rows);

/// Copies per-frame labels from a provider into the entry. Frames the
/// provider cannot resolve stay unlabelled.
void FillPseudoLabels(ManifestEntry& entry, const PseudoLabelProvider& provider);

/// A chunk with supervision for its centre frame.
struct LabeledChunk {
  ChunkSpan span;
  HeadPose6D center_headpose;
  GazeVector center_gaze;
  bool gaze_from_headpose = false;  // no gaze label: head orientation used instead
  std::optional<TaskLabel> task_label;
};

/// Returns nullopt (chunk dropped) when the head-pose provider has no label
/// or fails; a missing gaze label falls back to the head direction.
std::optional<LabeledChunk> AttachPseudoLabels(const ChunkSpan& span,
                                               const PseudoLabelProvider& headpose_provider,
                                               const PseudoLabelProvider& gaze_provider);
/// As above, and copies the centre frame's task label from the entry.
std::optional<LabeledChunk> AttachPseudoLabels(const ManifestEntry& entry, const ChunkSpan& span,
                                               const PseudoLabelProvider& headpose_provider,
                                               const PseudoLabelProvider& gaze_provider);

/// A chunk with pixels and audio loaded.
struct FrameChunk {
  LabeledChunk labels;
  std::vector<Image> frames;
  AudioClip audio;
};

FrameChunk MaterializeChunk(const ManifestEntry& entry, const LabeledChunk& labels,
                            const AudioClip& clip_audio, int resolution);

enum class Split { kTrain, kTest };

/// One line of a chunk list file (chunks.jsonl).
struct ChunkRecord {
  LabeledChunk chunk;
  Split split = Split::kTrain;
};

void WriteChunkList(const std::filesystem::path& path, std::span<const ChunkRecord> records);
std::vector<ChunkRecord> ReadChunkList(const std::filesystem::path& path);

void WriteLabelNorm(const std::filesystem::path& path, const LabelNormStats& stats);
LabelNormStats ReadLabelNorm(const std::filesystem::path& path);

/// Clip-level split: the last ceil(fraction * n) clips (manifest order) are
/// held out.
std::vector<Split> AssignClipSplits(std::size_t n_clips, double test_fraction);

}  // namespace avattn
