// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "avattn/data.hpp"
#include "avattn/error.hpp"

namespace avattn {

double WindowPoseSpread(const ManifestEntry& entry, const LabelNormStats& stats, int start, int len) {
  Require(len >= 1 && start >= 0 && static_cast<std::size_t>(start + len) <= entry.pseudo_headpose.size(),
          ErrorKind::kShape, fmt::format("pose spread: window [{}, {}) outside the labelled frames of '{}'",
                                         start, start + len, entry.clip_id));
  std::vector<Vector6d> z;
  z.reserve(len);
  for (int i = start; i < start + len; ++i) {
    const auto& h = entry.pseudo_headpose[i];
    if (!h) return std::numeric_limits<double>::infinity();
    z.push_back(NormalizeHeadpose(h->AsVector(), stats));
  }
  Vector6d mean = Vector6d::Zero();
  for (const auto& v : z) mean += v;
  mean /= len;
  Vector6d var = Vector6d::Zero();
  for (const auto& v : z) var += (v - mean).array().square().matrix();
  var /= len;
  return var.array().sqrt().maxCoeff();
}

std::vector<ChunkSpan> SelectChunks(const ManifestEntry& entry, const LabelNormStats& stats,
                                    const ChunkOptions& options, std::vector<std::string>* warnings) {
  Require(options.chunk_len >= 1, ErrorKind::kConfig, "select chunks: chunk_len must be positive");
  std::vector<ChunkSpan> out;
  if (entry.pseudo_headpose.size() != entry.num_frames() || entry.num_frames() == 0) {
    if (warnings != nullptr) {
      warnings->push_back(fmt::format("clip '{}': no per-frame head-pose labels, skipped", entry.clip_id));
    }
    return out;
  }
  const int n = static_cast<int>(entry.num_frames());
  for (int start = 0; start + options.chunk_len <= n; start += options.chunk_len) {
    if (WindowPoseSpread(entry, stats, start, options.chunk_len) <= options.std_threshold) {
      out.push_back({entry.clip_id, start, options.chunk_len});
    }
  }
  return out;
}

AudioClip AlignAudio(const ManifestEntry& entry, const ChunkSpan& span, const AudioClip& clip_audio) {
  const int last = span.start + span.length - 1;
  if (span.start < 0 || span.length < 1 || static_cast<std::size_t>(last) >= entry.audio_offsets.size()) {
    Fail(ErrorKind::kAlignment,
         fmt::format("align audio: clip '{}' has no offsets for frames {}..{}", entry.clip_id, span.start, last));
  }
  const long begin = entry.audio_offsets[span.start].first;
  const long end = entry.audio_offsets[last].second;
  if (begin < 0 || end > static_cast<long>(clip_audio.samples.size()) || end <= begin) {
    Fail(ErrorKind::kAlignment,
         fmt::format("align audio: clip '{}' samples [{}, {}) exceed the {}-sample audio", entry.clip_id,
                     begin, end, clip_audio.samples.size()));
  }
  AudioClip out;
  out.sample_rate = clip_audio.sample_rate;
  out.samples.assign(clip_audio.samples.begin() + begin, clip_audio.samples.begin() + end);
  return out;
}

std::optional<LabeledChunk> AttachPseudoLabels(const ChunkSpan& span,
                                               const PseudoLabelProvider& headpose_provider,
                                               const PseudoLabelProvider& gaze_provider) {
  const int center = span.center();
  std::optional<HeadPose6D> hp;
  try {
    hp = headpose_provider.Headpose(span.clip_id, center);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (!hp) return std::nullopt;

  LabeledChunk out;
  out.span = span;
  out.center_headpose = *hp;
  std::optional<GazeVector> gaze;
  try {
    gaze = gaze_provider.Gaze(span.clip_id, center);
  } catch (const Error&) {
    gaze.reset();
  }
  if (gaze && gaze->direction.norm() > kMinNorm) {
    out.center_gaze = *gaze;
  } else {
    out.center_gaze.direction = HeadDirection(hp->rotation);
    out.gaze_from_headpose = true;
  }
  return out;
}

std::optional<LabeledChunk> AttachPseudoLabels(const ManifestEntry& entry, const ChunkSpan& span,
                                               const PseudoLabelProvider& headpose_provider,
                                               const PseudoLabelProvider& gaze_provider) {
  auto out = AttachPseudoLabels(span, headpose_provider, gaze_provider);
  const auto center = static_cast<std::size_t>(span.center());
  if (out && center < entry.task_labels.size()) out->task_label = entry.task_labels[center];
  return out;
}

FrameChunk MaterializeChunk(const ManifestEntry& entry, const LabeledChunk& labels,
                            const AudioClip& clip_audio, int resolution) {
  const ChunkSpan& span = labels.span;
  if (span.start < 0 || static_cast<std::size_t>(span.start + span.length) > entry.num_frames()) {
    Fail(ErrorKind::kShape, fmt::format("chunk {}@{} exceeds the clip's {} frames", span.clip_id,
                                        span.start, entry.num_frames()));
  }
  FrameChunk out;
  out.labels = labels;
  out.frames.reserve(span.length);
  for (int i = span.start; i < span.start + span.length; ++i) {
    out.frames.push_back(ReadImage(entry.frame_paths[i], resolution, resolution));
  }
  out.audio = AlignAudio(entry, span, clip_audio);
  return out;
}

}  // namespace avattn
