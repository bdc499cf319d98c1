// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/synthworld.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <numbers>
#include <set>

#include "avattn/audio_io.hpp"
#include "avattn/error.hpp"
#include "oracles.hpp"

namespace avattn {
namespace {

/// Coefficient of determination of a least-squares affine fit, evaluated on
/// the rows from `split` onwards after fitting on the rows before it. A
/// split equal to the row count evaluates in-sample.
double HeldOutR2(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::Index split) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a << x, Eigen::VectorXd::Ones(x.rows());
  const Eigen::MatrixXd at = a.topRows(split);
  const Eigen::MatrixXd gram = at.transpose() * at + 1e-6 * Eigen::MatrixXd::Identity(a.cols(), a.cols());
  const Eigen::VectorXd w = gram.ldlt().solve(at.transpose() * y.head(split));
  const Eigen::Index n = split == x.rows() ? x.rows() : x.rows() - split;
  const Eigen::VectorXd resid = a.bottomRows(n) * w - y.tail(n);
  const Eigen::VectorXd centred = y.tail(n).array() - y.tail(n).mean();
  return 1.0 - resid.squaredNorm() / centred.squaredNorm();
}

double Correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

WorldConfig Small(int clips, std::uint64_t seed = 1) {
  WorldConfig c;
  c.seed = seed;
  c.n_clips = clips;
  c.image_size = 16;
  return c;
}

TEST(SynthWorld, SameSeedSameWorld) {
  const World a = GenerateWorld(Small(3));
  const World b = GenerateWorld(Small(3));
  const World c = GenerateWorld(Small(3, 2));
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a.clips[i].frames, b.clips[i].frames);
    EXPECT_EQ(a.clips[i].audio.samples, b.clips[i].audio.samples);
    EXPECT_NE(a.clips[i].audio.samples, c.clips[i].audio.samples);
  }
  EXPECT_EQ(a.clips[1].entry.clip_id, "clip_0001");
}

TEST(SynthWorld, ClipLayoutMatchesConfig) {
  const World w = GenerateWorld(Small(2));
  const SynthClip& c = w.clips[0];
  ASSERT_EQ(c.frames.size(), 14u);
  EXPECT_EQ(c.frames[0].width, 16);
  EXPECT_EQ(c.audio.samples.size(), 14u * 640u);
  EXPECT_EQ(c.entry.audio_offsets[13], (std::pair<long, long>{8320, 8960}));
  for (std::size_t i = 0; i < c.gaze.size(); ++i) {
    EXPECT_NEAR(c.gaze[i].yaw, c.head_angles[i].yaw + c.eye_offset[i].yaw, 1e-15);
    EXPECT_LE(std::abs(c.head_angles[i].yaw), 1.0);
    EXPECT_LE(std::abs(c.eye_offset[i].pitch), 0.1);
    EXPECT_GE(c.entry.task_labels[i]->zone.value(), 1);
    EXPECT_LE(c.entry.task_labels[i]->zone.value(), 9);
  }
}

TEST(SynthWorld, InvalidConfigsAreRejected) {
  WorldConfig c = Small(0);
  EXPECT_THROW(c.Validate(), Error);
  c = Small(1);
  c.sample_rate = 4000;
  EXPECT_THROW(c.Validate(), Error);
  c = Small(1);
  c.yaw_range = 2.0;
  EXPECT_THROW(c.Validate(), Error);
}

TEST(SynthWorld, ZonesTileTheGazeRange) {
  const WorldConfig c = Small(1);
  EXPECT_EQ(GazeZone({0.0, 0.0}, c), 5);
  EXPECT_EQ(GazeZone({0.5, 0.0}, c), 2);
  EXPECT_EQ(GazeZone({-0.5, 0.0}, c), 8);
  std::set<int> seen;
  for (double p = -0.6; p <= 0.6; p += 0.05) {
    for (double y = -1.1; y <= 1.1; y += 0.05) seen.insert(GazeZone({p, y}, c));
  }
  EXPECT_EQ(seen.size(), 9u);
}

TEST(SynthWorld, StaticHeadsPassEveryWindow) {
  WorldConfig c = Small(5);
  c.pose_walk_scale = 0.0;
  const World w = GenerateWorld(c);
  std::vector<ManifestEntry> entries;
  for (const auto& clip : w.clips) entries.push_back(clip.entry);
  const LabelNormStats stats = FitLabelNorm(std::span<const ManifestEntry>(entries));
  for (const auto& e : entries) EXPECT_EQ(SelectChunks(e, stats).size(), 2u) << e.clip_id;
}

TEST(SynthWorld, DefaultWalkKeepsMostWindows) {
  const std::vector<Sample> samples = WorldSamples(GenerateWorld(Small(30)), {});
  EXPECT_GE(samples.size(), 45u);
}

/// Frequency in [lo, hi] with the largest DFT magnitude of x.
double PeakFrequency(std::span<const double> x, int sample_rate, double lo, double hi) {
  double best_f = lo, best = -1.0;
  for (double f = lo; f <= hi; f += 2.0) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * t / (x.size() - 1));
      acc += w * x[t] * std::polar(1.0, -2.0 * std::numbers::pi * f * t / sample_rate);
    }
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_f = f;
    }
  }
  return best_f;
}

TEST(SynthWorld, FirstFormantTracksYaw) {
  WorldConfig c = Small(100);
  c.frames_per_clip = 3;
  const World w = GenerateWorld(c);
  Eigen::VectorXd yaw(100), peak(100);
  for (int i = 0; i < 100; ++i) {
    const auto& clip = w.clips[i];
    const auto [s, e] = clip.entry.audio_offsets[1];
    yaw[i] = clip.head_angles[1].yaw;
    peak[i] = PeakFrequency(std::span(clip.audio.samples).subspan(s, e - s), c.sample_rate, 250.0, 1200.0);
  }
  EXPECT_GT(std::abs(Correlation(yaw, peak)), 0.9);
  EXPECT_DOUBLE_EQ(Formant1Hz(c.yaw_range, c), 1050.0);
  EXPECT_DOUBLE_EQ(Formant2Hz(-c.pitch_range, c), 1500.0);
}

TEST(SynthWorld, AudioFeaturesLinearlyPredictYaw) {
  WorldConfig c = Small(200);
  c.frames_per_clip = 7;
  const World w = GenerateWorld(c);
  const FilterbankConfig fb;
  Eigen::MatrixXd x(200, fb.n_filters);
  Eigen::VectorXd y(200);
  for (int i = 0; i < 200; ++i) {
    x.row(i) = ExtractFeatures(w.clips[i].audio, fb).values.colwise().mean();
    y[i] = w.clips[i].head_angles[3].yaw;
  }
  EXPECT_GT(HeldOutR2(x, y, 150), 0.5);
}

TEST(SynthWorld, PupilCentroidIsAffineInEyeOffset) {
  WorldConfig c;
  c.seed = 3;
  c.n_clips = 1;
  c.frames_per_clip = 200;
  c.yaw_range = 0.0;
  c.pitch_range = 0.0;
  c.roll_range = 0.0;
  c.image_size = 128;
  const SynthClip clip = GenerateClip(c, 0);
  Eigen::MatrixXd offsets(200, 2);
  Eigen::VectorXd cx(200), cy(200);
  for (int i = 0; i < 200; ++i) {
    const Image& img = clip.frames[i];
    double sw = 0, sx = 0, sy = 0;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const auto* p = img.pixel(x, y);
        const double blue_excess = static_cast<double>(p[2]) - p[0];
        if (blue_excess <= 25.0) continue;  // background is +20, pupil +110
        sw += blue_excess;
        sx += blue_excess * x;
        sy += blue_excess * y;
      }
    }
    ASSERT_GT(sw, 0.0);
    cx[i] = sx / sw;
    cy[i] = sy / sw;
    offsets(i, 0) = clip.eye_offset[i].yaw;
    offsets(i, 1) = clip.eye_offset[i].pitch;
  }
  // Three parameters over 200 frames: the in-sample fit is not inflated.
  EXPECT_GT(HeldOutR2(offsets, cx, 200), 0.9);
  EXPECT_GT(HeldOutR2(offsets, cy, 200), 0.9);
}

TEST(OracleProvider, NoiseHasTheRequestedScale) {
  const World w = GenerateWorld(Small(20));
  const double sigma = 0.05;
  const OracleProvider noisy(w, sigma, 4);
  const OracleProvider exact(w);
  double sum = 0.0;
  int n = 0;
  for (const auto& clip : w.clips) {
    for (int f = 0; f < 14; ++f) {
      const Vector6d d = noisy.Headpose(clip.entry.clip_id, f)->AsVector() - clip.headpose[f].AsVector();
      sum += d.cwiseAbs().sum();
      n += 6;
      EXPECT_EQ(exact.Headpose(clip.entry.clip_id, f)->AsVector(), clip.headpose[f].AsVector());
    }
  }
  const double expected = sigma * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(sum / n, expected, 0.1 * expected);
  EXPECT_EQ(noisy.Headpose("clip_0003", 5)->AsVector(), noisy.Headpose("clip_0003", 5)->AsVector());
}

TEST(OracleProvider, UnknownIdsAreLookupErrors) {
  const OracleProvider p(GenerateWorld(Small(1)));
  for (auto [clip, frame] : {std::pair<std::string, int>{"clip_0009", 0}, {"clip_0000", 14}, {"clip_0000", -1}}) {
    try {
      p.Gaze(clip, frame);
      FAIL() << clip << "#" << frame;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kLookup);
    }
  }
}

TEST(SynthWorld, WrittenWorldLoadsBack) {
  const World w = GenerateWorld(Small(2));
  const auto dir = avattn::testing::ScratchDir("world");
  const auto manifest_path = WriteWorld(w, dir);
  const Manifest m = LoadManifest(manifest_path);
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_TRUE(m.issues.empty());
  EXPECT_EQ(ReadImage(m.entries[1].frame_paths[4], 16, 16), w.clips[1].frames[4]);
  EXPECT_EQ(ReadWav(m.entries[0].audio_path).samples, w.clips[0].audio.samples);
  const CsvLabelProvider labels = CsvLabelProvider::Load(dir / "pseudo_labels.csv");
  EXPECT_TRUE(labels.Headpose("clip_0001", 13)->rotation.isApprox(w.clips[1].headpose[13].rotation, 1e-15));
}

}  // namespace
}  // namespace avattn
