// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <random>

#include "avattn/audio_io.hpp"
#include "avattn/error.hpp"

namespace avattn {
namespace {

constexpr int kSupersample = 3;
constexpr double kF1CenterHz = 700.0;
constexpr double kF1SwingHz = 350.0;
constexpr double kF2CenterHz = 2000.0;
constexpr double kF2SwingHz = 500.0;
constexpr double kPupilFullScale = 0.15;  // eye offset (rad) that moves the pupil to the rim

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double Reflect(double x, double bound) {
  if (bound <= 0.0) return 0.0;
  if (x > bound) x = 2.0 * bound - x;
  if (x < -bound) x = -2.0 * bound - x;
  return std::clamp(x, -bound, bound);
}

struct Rgb {
  double r, g, b;
};

constexpr Rgb kBackground{70, 80, 90};
constexpr Rgb kSkin{220, 180, 150};
constexpr Rgb kEyeWhite{245, 245, 245};
constexpr Rgb kPupil{30, 40, 140};
constexpr Rgb kNose{150, 60, 50};

struct FaceGeometry {
  double cx, cy;      // face centre, pixels
  double a, b;        // ellipse semi-axes
  double roll;
  double shift_x, shift_y;  // feature displacement from head yaw/pitch, face frame
  double pupil_x, pupil_y;  // pupil displacement from the eye offset, face frame
  double eye_r, pupil_r, nose_r;
};

Rgb Shade(const FaceGeometry& g, double px, double py) {
  const double dx = px - g.cx;
  const double dy = py - g.cy;
  const double c = std::cos(g.roll);
  const double s = std::sin(g.roll);
  const double u = c * dx + s * dy;   // face frame
  const double v = -s * dx + c * dy;
  if ((u / g.a) * (u / g.a) + (v / g.b) * (v / g.b) > 1.0) return kBackground;
  Rgb out = kSkin;
  for (const double side : {-1.0, 1.0}) {
    const double ex = g.shift_x + side * 0.38 * g.a;
    const double ey = g.shift_y - 0.15 * g.b;
    if (std::hypot(u - ex, v - ey) <= g.eye_r) {
      out = kEyeWhite;
      if (std::hypot(u - ex - g.pupil_x, v - ey - g.pupil_y) <= g.pupil_r) out = kPupil;
    }
  }
  if (std::hypot(u - 1.3 * g.shift_x, v - (1.3 * g.shift_y + 0.12 * g.b)) <= g.nose_r) out = kNose;
  return out;
}

Image Render(const WorldConfig& cfg, const HeadPose6D& pose, double yaw, double pitch, double roll,
             const PitchYaw& eye) {
  const double size = cfg.image_size;
  const double k = 1.0 / pose.translation.z();
  FaceGeometry g{};
  g.cx = size * (0.5 + pose.translation.x());
  g.cy = size * (0.5 + pose.translation.y());
  g.a = 0.30 * size * k;
  g.b = 0.38 * size * k;
  g.roll = roll;
  g.shift_x = -std::sin(yaw) * 0.4 * g.a;
  g.shift_y = -std::sin(pitch) * 0.4 * g.b;
  g.eye_r = 0.16 * g.a;
  g.pupil_r = 0.45 * g.eye_r;
  g.nose_r = 0.10 * g.a;
  double px = -eye.yaw / kPupilFullScale;
  double py = -eye.pitch / kPupilFullScale;
  const double n = std::hypot(px, py);
  if (n > 1.0) {
    px /= n;
    py /= n;
  }
  g.pupil_x = px * (g.eye_r - g.pupil_r);
  g.pupil_y = py * (g.eye_r - g.pupil_r);

  Image img(cfg.image_size, cfg.image_size);
  const double inv = 1.0 / (kSupersample * kSupersample);
  for (int y = 0; y < cfg.image_size; ++y) {
    for (int x = 0; x < cfg.image_size; ++x) {
      Rgb acc{0, 0, 0};
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const Rgb c = Shade(g, x + (sx + 0.5) / kSupersample, y + (sy + 0.5) / kSupersample);
          acc.r += c.r;
          acc.g += c.g;
          acc.b += c.b;
        }
      }
      std::uint8_t* p = img.pixel(x, y);
      p[0] = static_cast<std::uint8_t>(std::lround(acc.r * inv));
      p[1] = static_cast<std::uint8_t>(std::lround(acc.g * inv));
      p[2] = static_cast<std::uint8_t>(std::lround(acc.b * inv));
    }
  }
  return img;
}

}  // namespace

void WorldConfig::Validate() const {
  Require(n_clips > 0, ErrorKind::kConfig, "world: n_clips must be positive");
  Require(frames_per_clip > 0, ErrorKind::kConfig, "world: frames_per_clip must be positive");
  Require(fps > 0.0 && sample_rate > 0 && image_size >= 8, ErrorKind::kConfig,
          "world: fps, sample_rate and image_size must be positive (image_size >= 8)");
  Require(pose_walk_scale >= 0.0 && eye_offset_scale >= 0.0 && audio_noise >= 0.0, ErrorKind::kConfig,
          "world: walk, eye-offset and noise scales must be non-negative");
  Require(yaw_range >= 0.0 && pitch_range >= 0.0 && roll_range >= 0.0 && yaw_range < std::numbers::pi / 2 &&
              pitch_range < std::numbers::pi / 2,
          ErrorKind::kConfig, "world: pose ranges must lie in [0, pi/2)");
  Require(sample_rate / 2.0 > kF2CenterHz + kF2SwingHz + 500.0, ErrorKind::kConfig,
          "world: sample_rate too low for the formant layout");
}

double Formant1Hz(double yaw, const WorldConfig& cfg) {
  return cfg.yaw_range > 0.0 ? kF1CenterHz + kF1SwingHz * yaw / cfg.yaw_range : kF1CenterHz;
}

double Formant2Hz(double pitch, const WorldConfig& cfg) {
  return cfg.pitch_range > 0.0 ? kF2CenterHz + kF2SwingHz * pitch / cfg.pitch_range : kF2CenterHz;
}

int GazeZone(const PitchYaw& gaze, const WorldConfig& cfg) {
  const double ty = (cfg.yaw_range + cfg.eye_offset_scale) / 3.0;
  const double tp = (cfg.pitch_range + cfg.eye_offset_scale) / 3.0;
  const int col = gaze.yaw < -ty ? 0 : (gaze.yaw > ty ? 2 : 1);
  const int row = gaze.pitch > tp ? 0 : (gaze.pitch < -tp ? 2 : 1);
  return 1 + 3 * row + col;
}

std::string SynthClipId(int clip_index) { return fmt::format("clip_{:04d}", clip_index); }

SynthClip GenerateClip(const WorldConfig& cfg, int clip_index) {
  cfg.Validate();
  std::mt19937_64 rng(SplitMix(cfg.seed ^ SplitMix(static_cast<std::uint64_t>(clip_index))));
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = cfg.frames_per_clip;

  const double ratio_pitch = cfg.yaw_range > 0.0 ? cfg.pitch_range / cfg.yaw_range : 1.0;
  const double ratio_roll = cfg.yaw_range > 0.0 ? cfg.roll_range / cfg.yaw_range : 1.0;
  double yaw = Uniform(rng, -1.0, 1.0) * cfg.yaw_range;
  double pitch = Uniform(rng, -1.0, 1.0) * cfg.pitch_range;
  double roll = Uniform(rng, -1.0, 1.0) * cfg.roll_range;
  const Eigen::Vector3d translation(Uniform(rng, -0.06, 0.06), Uniform(rng, -0.05, 0.05), Uniform(rng, 0.95, 1.25));
  PitchYaw eye{Uniform(rng, -1.0, 1.0) * cfg.eye_offset_scale, Uniform(rng, -1.0, 1.0) * cfg.eye_offset_scale};
  const double f0 = Uniform(rng, 110.0, 130.0);

  SynthClip clip;
  ManifestEntry& e = clip.entry;
  e.clip_id = SynthClipId(clip_index);
  e.fps = cfg.fps;
  e.sample_rate = cfg.sample_rate;
  e.audio_path = std::filesystem::path("audio") / (e.clip_id + ".wav");
  std::vector<double> rolls;
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      yaw = Reflect(yaw + cfg.pose_walk_scale * normal(rng), cfg.yaw_range);
      pitch = Reflect(pitch + cfg.pose_walk_scale * ratio_pitch * normal(rng), cfg.pitch_range);
      roll = Reflect(roll + cfg.pose_walk_scale * ratio_roll * normal(rng), cfg.roll_range);
      eye.yaw = std::clamp(eye.yaw + 0.15 * cfg.eye_offset_scale * normal(rng), -cfg.eye_offset_scale,
                           cfg.eye_offset_scale);
      eye.pitch = std::clamp(eye.pitch + 0.15 * cfg.eye_offset_scale * normal(rng), -cfg.eye_offset_scale,
                             cfg.eye_offset_scale);
    }
    HeadPose6D pose;
    pose.rotation = AxisAngleFromMatrix(RotationFromEuler(yaw, pitch, roll));
    pose.translation = translation;
    const PitchYaw gaze{pitch + eye.pitch, yaw + eye.yaw};

    clip.headpose.push_back(pose);
    clip.head_angles.push_back({pitch, yaw});
    clip.eye_offset.push_back(eye);
    clip.gaze.push_back(gaze);
    rolls.push_back(roll);
    e.frame_paths.push_back(std::filesystem::path("frames") / e.clip_id / fmt::format("{:03d}.png", i));
    e.pseudo_headpose.emplace_back(pose);
    e.pseudo_gaze.emplace_back(GazeVector{PitchYawToVector(gaze)});
    e.task_labels.emplace_back(TaskLabel{GazeZone(gaze, cfg), gaze});
    const auto start = std::lround(i * cfg.sample_rate / cfg.fps);
    const auto end = std::lround((i + 1) * cfg.sample_rate / cfg.fps);
    e.audio_offsets.emplace_back(start, end);
  }
  for (int i = 0; i < n; ++i) {
    clip.frames.push_back(
        Render(cfg, clip.headpose[i], clip.head_angles[i].yaw, clip.head_angles[i].pitch, rolls[i], clip.eye_offset[i]));
  }

  // Harmonic source shaped by two formants that follow the interpolated pose.
  const long total = e.audio_offsets.back().second;
  const int harmonics = static_cast<int>(0.45 * cfg.sample_rate / f0);
  std::vector<double> phase0(harmonics);
  for (auto& p : phase0) p = Uniform(rng, 0.0, 2.0 * std::numbers::pi);
  clip.audio.sample_rate = cfg.sample_rate;
  clip.audio.samples.resize(static_cast<std::size_t>(total));
  for (long s = 0; s < total; ++s) {
    const double t = static_cast<double>(s) / cfg.sample_rate;
    const double pos = std::clamp((s + 0.5) * cfg.fps / cfg.sample_rate - 0.5, 0.0, n - 1.0);
    const int i0 = static_cast<int>(pos);
    const int i1 = std::min(i0 + 1, n - 1);
    const double w = pos - i0;
    const double y = (1 - w) * clip.head_angles[i0].yaw + w * clip.head_angles[i1].yaw;
    const double p = (1 - w) * clip.head_angles[i0].pitch + w * clip.head_angles[i1].pitch;
    const double f1 = Formant1Hz(y, cfg);
    const double f2 = Formant2Hz(p, cfg);
    double acc = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      const double f = k * f0;
      const double a = std::exp(-0.5 * std::pow((f - f1) / 120.0, 2)) +
                       0.8 * std::exp(-0.5 * std::pow((f - f2) / 200.0, 2)) + 0.01;
      acc += a * std::sin(2.0 * std::numbers::pi * f * t + phase0[k - 1]);
    }
    const double x = 0.1 * acc + cfg.audio_noise * normal(rng);
    clip.audio.samples[static_cast<std::size_t>(s)] = static_cast<double>(static_cast<float>(x));
  }
  return clip;
}

World GenerateWorld(const WorldConfig& cfg) {
  cfg.Validate();
  World world;
  world.config = cfg;
  world.clips.reserve(static_cast<std::size_t>(cfg.n_clips));
  for (int i = 0; i < cfg.n_clips; ++i) world.clips.push_back(GenerateClip(cfg, i));
  return world;
}

std::filesystem::path WriteWorld(const World& world, const std::filesystem::path& dir, double label_noise) {
  std::filesystem::create_directories(dir);
  const OracleProvider oracle(world, label_noise, world.config.seed);
  std::vector<ManifestEntry> entries;
  std::vector<PseudoLabelRow> rows;
  for (const auto& clip : world.clips) {
    ManifestEntry e = clip.entry;
    for (std::size_t i = 0; i < clip.frames.size(); ++i) {
      e.frame_paths[i] = dir / clip.entry.frame_paths[i];
      std::filesystem::create_directories(e.frame_paths[i].parent_path());
      WriteImage(e.frame_paths[i], clip.frames[i]);
    }
    e.audio_path = dir / clip.entry.audio_path;
    std::filesystem::create_directories(e.audio_path.parent_path());
    WriteWav(e.audio_path, clip.audio, WavEncoding::kFloat32);
    FillPseudoLabels(e, oracle);
    for (std::size_t i = 0; i < e.num_frames(); ++i) {
      rows.push_back({e.clip_id, static_cast<int>(i), *e.pseudo_headpose[i], e.pseudo_gaze[i]});
    }
    entries.push_back(std::move(e));
  }
  const auto manifest = dir / "manifest.jsonl";
  WriteManifest(manifest, entries);
  WritePseudoLabelCsv(dir / "pseudo_labels.csv", rows);
  return manifest;
}

OracleProvider::OracleProvider(const World& world, double noise_std, std::uint64_t noise_seed)
    : noise_std_(noise_std), noise_seed_(noise_seed) {
  Require(noise_std >= 0.0, ErrorKind::kConfig, "oracle: noise must be non-negative");
  for (const auto& c : world.clips) clips_[c.entry.clip_id] = Clip{c.headpose, c.gaze};
}

const OracleProvider::Clip& OracleProvider::Find(const std::string& clip_id, int frame) const {
  const auto it = clips_.find(clip_id);
  if (it == clips_.end()) Fail(ErrorKind::kLookup, fmt::format("oracle: unknown clip '{}'", clip_id));
  if (frame < 0 || static_cast<std::size_t>(frame) >= it->second.headpose.size()) {
    Fail(ErrorKind::kLookup, fmt::format("oracle: no frame {}#{}", clip_id, frame));
  }
  return it->second;
}

std::vector<double> OracleProvider::Noise(const std::string& clip_id, int frame, int salt, int count) const {
  std::mt19937_64 rng(SplitMix(noise_seed_ ^ SplitMix(Fnv1a(clip_id) + SplitMix(frame * 8ULL + salt))));
  std::normal_distribution<double> normal(0.0, noise_std_);
  std::vector<double> out(static_cast<std::size_t>(count));
  for (auto& v : out) v = normal(rng);
  return out;
}

std::optional<HeadPose6D> OracleProvider::Headpose(const std::string& clip_id, int frame) const {
  const HeadPose6D& truth = Find(clip_id, frame).headpose[static_cast<std::size_t>(frame)];
  if (noise_std_ == 0.0) return truth;
  const auto noise = Noise(clip_id, frame, 1, 6);
  Vector6d v = truth.AsVector();
  for (int i = 0; i < 6; ++i) v[i] += noise[static_cast<std::size_t>(i)];
  return HeadPose6D::FromVector(v);
}

std::optional<GazeVector> OracleProvider::Gaze(const std::string& clip_id, int frame) const {
  PitchYaw g = Find(clip_id, frame).gaze[static_cast<std::size_t>(frame)];
  if (noise_std_ > 0.0) {
    const auto noise = Noise(clip_id, frame, 2, 2);
    g.pitch += noise[0];
    g.yaw += noise[1];
  }
  return GazeVector{PitchYawToVector(g)};
}

std::vector<Sample> WorldSamples(const World& world, const WorldSamplesOptions& options, LabelNormStats* label_norm) {
  const OracleProvider oracle(world, options.label_noise, world.config.seed);
  std::vector<ManifestEntry> entries;
  for (const auto& c : world.clips) {
    ManifestEntry e = c.entry;
    FillPseudoLabels(e, oracle);
    entries.push_back(std::move(e));
  }
  const LabelNormStats norm = FitLabelNorm(std::span<const ManifestEntry>(entries));
  if (label_norm) *label_norm = norm;
  const std::vector<Split> splits = AssignClipSplits(entries.size(), options.test_fraction);
  std::vector<Sample> samples;
  for (std::size_t c = 0; c < entries.size(); ++c) {
    const SynthClip& clip = world.clips[c];
    for (const ChunkSpan& span : SelectChunks(entries[c], norm, options.chunks)) {
      const auto labeled = AttachPseudoLabels(entries[c], span, oracle, oracle);
      if (!labeled) continue;
      FrameChunk fc;
      fc.labels = *labeled;
      fc.frames.assign(clip.frames.begin() + span.start, clip.frames.begin() + span.start + span.length);
      fc.audio = AlignAudio(entries[c], span, clip.audio);
      samples.push_back(MakeSample(fc, splits[c], options.fbank));
    }
  }
  return samples;
}

}  // namespace avattn
