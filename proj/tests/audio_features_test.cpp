// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/audio_features.hpp"

#include <gtest/gtest.h>

#include <random>

#include "avattn/audio_io.hpp"
#include "avattn/error.hpp"
#include "oracles.hpp"

namespace avattn {
namespace {

AudioClip Clip(std::vector<double> samples, int sr = 16000) { return AudioClip{std::move(samples), sr}; }

TEST(FrameLayout, DefaultsGive160SampleWindowsWithHop80) {
  const FrameLayout l = ResolveLayout(FilterbankConfig{}, 16000);
  EXPECT_EQ(l.window, 160);
  EXPECT_EQ(l.hop, 80);
  EXPECT_EQ(l.fft_size, 256);
  EXPECT_DOUBLE_EQ(l.f_max, 8000.0);
}

TEST(FrameSignal, FrameCountMatchesFloorFormula) {
  for (int n : {160, 161, 239, 240, 8000}) {
    const Eigen::MatrixXd frames = FrameSignal(Clip(std::vector<double>(n, 0.1)), FilterbankConfig{});
    EXPECT_EQ(frames.rows(), (n - 160) / 80 + 1) << n;
    EXPECT_EQ(frames.cols(), 160);
  }
}

TEST(FrameSignal, ShorterThanOneWindowIsTooShort) {
  try {
    FrameSignal(Clip(std::vector<double>(159, 0.0)), FilterbankConfig{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTooShort);
  }
}

TEST(PreEmphasis, KeepsFirstSampleAndDifferencesTheRest) {
  const AudioClip out = PreEmphasize(Clip({1.0, 2.0, 4.0}), 0.5);
  EXPECT_DOUBLE_EQ(out.samples[0], 1.0);
  EXPECT_DOUBLE_EQ(out.samples[1], 1.5);
  EXPECT_DOUBLE_EQ(out.samples[2], 3.0);
}

TEST(HammingWindow, EndpointsAndSymmetry) {
  const auto w = HammingWindow(160);
  EXPECT_NEAR(w.front(), 0.08, 1e-12);
  EXPECT_NEAR(w.back(), 0.08, 1e-12);
  for (int i = 0; i < 80; ++i) EXPECT_NEAR(w[i], w[159 - i], 1e-12);
}

TEST(MelScale, HtkFormulaAndInverse) {
  EXPECT_NEAR(HzToMel(1000.0), 2595.0 * std::log10(1.0 + 1000.0 / 700.0), 1e-9);
  EXPECT_NEAR(HzToMel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  for (double f : {0.0, 120.0, 1000.0, 7999.0}) EXPECT_NEAR(MelToHz(HzToMel(f)), f, 1e-8);
  EXPECT_THROW(HzToMel(-1.0), Error);
}

TEST(PowerSpectrum, MatchesNaiveDft) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> frame(160);
  for (auto& v : frame) v = n(rng);
  const auto fast = PowerSpectrum(frame, 256);
  const auto slow = testing::NaiveDftPower(frame, 256);
  ASSERT_EQ(fast.size(), slow.size());
  for (std::size_t k = 0; k < fast.size(); ++k) EXPECT_NEAR(fast[k], slow[k], 1e-9 * (1.0 + slow[k]));
}

TEST(MelFilterMatrix, RowsPeakAtOneAndAreNonEmpty) {
  const Eigen::MatrixXd m = MelFilterMatrix(FilterbankConfig{}, 16000);
  ASSERT_EQ(m.rows(), 40);
  ASSERT_EQ(m.cols(), 129);
  for (int r = 0; r < 40; ++r) {
    EXPECT_DOUBLE_EQ(m.row(r).maxCoeff(), 1.0) << r;
    EXPECT_GE(m.row(r).minCoeff(), 0.0);
  }
}

TEST(MelFilterMatrix, TooManyFiltersForFftIsConfigError) {
  FilterbankConfig cfg;
  cfg.n_filters = 128;
  try {
    MelFilterMatrix(cfg, 16000);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(ExtractFeatures, MatchesNaiveDftOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = testing::RandomClip(rng, 8000, 16000);
    const FilterbankFeatures f = ExtractFeatures(Clip(x), FilterbankConfig{});
    const Eigen::MatrixXd ref = testing::NaiveLogMel(x, 16000);
    ASSERT_EQ(f.values.rows(), ref.rows());
    EXPECT_LT(((f.values - ref).array().exp() - 1.0).abs().maxCoeff(), 1e-6);
  }
}

TEST(ExtractFeatures, PureToneEnergyPeaksInTheFilterCentredOnIt) {
  const FilterbankConfig cfg;
  const auto centers = MelFilterCenters(cfg, 16000);
  for (int j : {15, 25, 35}) {
    std::vector<double> x(4000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * centers[j] * i / 16000.0);
    const FilterbankFeatures f = ExtractFeatures(Clip(x), cfg);
    Eigen::Index arg = 0;
    f.values.colwise().mean().maxCoeff(&arg);
    EXPECT_NEAR(static_cast<int>(arg), j, 1) << "filter " << j;
  }
}

TEST(ExtractFeatures, DeterministicAndFrameTimesAreCentres) {
  std::mt19937_64 rng(5);
  const auto x = testing::RandomClip(rng, 1600, 16000);
  const FilterbankFeatures a = ExtractFeatures(Clip(x), FilterbankConfig{});
  const FilterbankFeatures b = ExtractFeatures(Clip(x), FilterbankConfig{});
  EXPECT_TRUE(a.values == b.values);
  EXPECT_DOUBLE_EQ(a.frame_times[0], 0.005);
  EXPECT_DOUBLE_EQ(a.frame_times[1], 0.010);
}

TEST(ExtractFeatures, ScalingUpNeverDecreasesAnyValue) {
  std::mt19937_64 rng(9);
  const auto x = testing::RandomClip(rng, 4000, 16000);
  const FilterbankFeatures base = ExtractFeatures(Clip(x), FilterbankConfig{});
  for (double alpha : {1.5, 3.0}) {
    auto y = x;
    for (auto& v : y) v *= alpha;
    const FilterbankFeatures scaled = ExtractFeatures(Clip(y), FilterbankConfig{});
    EXPECT_GE((scaled.values - base.values).minCoeff(), -1e-12);
  }
}

TEST(ExtractFeatures, SilenceHitsTheLogFloor) {
  const FilterbankFeatures f = ExtractFeatures(Clip(std::vector<double>(800, 0.0)), FilterbankConfig{});
  EXPECT_DOUBLE_EQ(f.values.maxCoeff(), std::log(1e-10));
}

TEST(Normalization, ZeroMeanUnitVarianceOnTheFittingCorpus) {
  std::mt19937_64 rng(21);
  std::vector<FilterbankFeatures> corpus;
  for (int i = 0; i < 4; ++i) corpus.push_back(ExtractFeatures(Clip(testing::RandomClip(rng, 8000, 16000)), {}));
  const NormStats stats = FitNormStats(corpus);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(40), sq = Eigen::VectorXd::Zero(40);
  long n = 0;
  for (const auto& f : corpus) {
    const auto z = ApplyNorm(f, stats).values;
    sum += z.colwise().sum().transpose();
    sq += z.array().square().colwise().sum().matrix().transpose();
    n += z.rows();
  }
  const Eigen::VectorXd mean = sum / n;
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(((sq / n - mean.cwiseAbs2()).array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(Normalization, ConstantCoefficientUsesTheStdFloor) {
  FilterbankFeatures f;
  f.values = Eigen::MatrixXd::Constant(5, 3, 2.0);
  const NormStats stats = FitNormStats(std::vector<FilterbankFeatures>{f});
  EXPECT_DOUBLE_EQ(stats.std.minCoeff(), kNormStdFloor);
  EXPECT_TRUE(ApplyNorm(f, stats).values.isZero());
}

TEST(Normalization, NeedsTwoFrames) {
  FilterbankFeatures f;
  f.values = Eigen::MatrixXd::Zero(1, 3);
  EXPECT_THROW(FitNormStats(std::vector<FilterbankFeatures>{f}), Error);
}

TEST(WavIo, Float32RoundTripIsExactForFloatValues) {
  const auto dir = testing::ScratchDir("wav");
  AudioClip clip;
  clip.samples = {0.0, 0.25, -0.5, static_cast<float>(0.1)};
  WriteWav(dir / "a.wav", clip);
  const AudioClip back = ReadWav(dir / "a.wav");
  EXPECT_EQ(back.sample_rate, 16000);
  EXPECT_EQ(back.samples, clip.samples);
}

TEST(WavIo, Pcm16RoundTripWithinOneLsb) {
  const auto dir = testing::ScratchDir("wav16");
  AudioClip clip;
  clip.samples = {0.0, 0.3, -0.7, 0.999};
  WriteWav(dir / "a.wav", clip, WavEncoding::kPcm16);
  const AudioClip back = ReadWav(dir / "a.wav");
  ASSERT_EQ(back.samples.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32768);
}

TEST(FeatureFile, RoundTripKeepsFloatValuesAndSidecar) {
  const auto dir = testing::ScratchDir("fbank");
  std::mt19937_64 rng(2);
  const FilterbankFeatures f = ExtractFeatures(Clip(testing::RandomClip(rng, 1600, 16000)), {});
  WriteFeatureFile(dir / "x.fbank", f, {16000, ConfigHash({}, 16000)});
  FeatureFileMeta meta;
  const FilterbankFeatures back = ReadFeatureFile(dir / "x.fbank", &meta);
  EXPECT_EQ(meta.sample_rate, 16000);
  EXPECT_EQ(meta.config_hash, ConfigHash({}, 16000));
  EXPECT_EQ(back.frame_times, f.frame_times);
  EXPECT_TRUE(back.values == f.values.cast<float>().cast<double>());
}

}  // namespace
}  // namespace avattn
