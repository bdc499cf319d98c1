// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/dataset.hpp"

#include <fmt/format.h>
#include <map>

#include "avattn/audio_io.hpp"
#include "avattn/error.hpp"

namespace avattn {

std::string SampleId(const ChunkSpan& span) { return fmt::format("{}@{}", span.clip_id, span.start); }

Sample MakeSample(const FrameChunk& chunk, Split split, const FilterbankConfig& fbank) {
  Sample s;
  s.id = SampleId(chunk.labels.span);
  s.clip_id = chunk.labels.span.clip_id;
  s.split = split;
  s.frames = chunk.frames;
  if (!chunk.audio.samples.empty()) s.audio_features = ExtractFeatures(chunk.audio, fbank);
  s.headpose = chunk.labels.center_headpose.AsVector();
  s.gaze = chunk.labels.center_gaze.direction;
  if (chunk.labels.task_label) {
    if (chunk.labels.task_label->gaze) s.gt_gaze = PitchYawToVector(*chunk.labels.task_label->gaze);
    s.zone = chunk.labels.task_label->zone;
  }
  return s;
}

std::vector<Sample> LoadSamples(std::span<const ManifestEntry> entries, std::span<const ChunkRecord> records,
                                const DatasetOptions& options) {
  std::map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : entries) by_id[e.clip_id] = &e;
  std::map<std::string, AudioClip> audio_cache;
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto it = by_id.find(r.chunk.span.clip_id);
    if (it == by_id.end()) {
      Fail(ErrorKind::kLookup, fmt::format("dataset: chunk references unknown clip '{}'", r.chunk.span.clip_id));
    }
    auto [audio, inserted] = audio_cache.try_emplace(it->first);
    if (inserted) audio->second = ReadWav(it->second->audio_path);
    const FrameChunk chunk = MaterializeChunk(*it->second, r.chunk, audio->second, options.resolution);
    out.push_back(MakeSample(chunk, r.split, options.fbank));
  }
  return out;
}

NormStats FitAudioNorm(std::span<const Sample> samples) {
  std::vector<FilterbankFeatures> feats;
  for (const auto& s : samples) {
    if (s.split == Split::kTrain && s.has_audio()) feats.push_back(s.audio_features);
  }
  return FitNormStats(feats);
}

std::vector<Sample> SelectSplit(std::span<const Sample> samples, Split split) {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(s);
  }
  return out;
}

ModelInput MakeModelInput(const Sample& sample, const NormStats& audio_norm) {
  ModelInput in;
  in.frames.reserve(sample.frames.size());
  for (const auto& f : sample.frames) in.frames.push_back(ImageToFeatureMap(f));
  if (sample.has_audio()) in.audio = ApplyNorm(sample.audio_features, audio_norm).values;
  return in;
}

}  // namespace avattn
