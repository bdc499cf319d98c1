// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/training.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <limits>

#include "avattn/dataset.hpp"
#include "avattn/error.hpp"
#include "oracles.hpp"
#include "test_world.hpp"

namespace avattn {
namespace {

using avattn::testing::SmallModel;
using avattn::testing::SmallSamples;

std::vector<const Sample*> Pointers(const std::vector<Sample>& samples, std::size_t n) {
  std::vector<const Sample*> out;
  for (std::size_t i = 0; i < std::min(n, samples.size()); ++i) out.push_back(&samples[i]);
  return out;
}

TrainContext ContextFor(const std::vector<Sample>& samples) {
  TrainContext ctx;
  ctx.audio_norm = FitAudioNorm(samples);
  return ctx;
}

std::vector<Eigen::MatrixXd> Grads(const AvModel& model) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& p : model.params().params()) out.push_back(p.grad);
  return out;
}

TEST(ModalityDropout, ZeroProbabilityKeepsBothModalities) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(SampleModalityMask(rng, 0.0), ModalityMask::AudioVisual());
}

TEST(ModalityDropout, FrequenciesMatchConditionalRates) {
  std::mt19937_64 rng(2);
  const int n = 20000;
  int audio_dropped = 0, visual_dropped = 0;
  for (int i = 0; i < n; ++i) {
    const ModalityMask m = SampleModalityMask(rng, 0.5);
    ASSERT_TRUE(m.use_audio || m.use_visual);
    audio_dropped += !m.use_audio;
    visual_dropped += !m.use_visual;
  }
  const double fa = static_cast<double>(audio_dropped) / n;
  const double fv = static_cast<double>(visual_dropped) / n;
  EXPECT_GE(fa, 0.15);
  EXPECT_LE(fa, 0.45);
  EXPECT_NEAR(fa, 1.0 / 3.0, 0.02);
  EXPECT_NEAR(fv, 1.0 / 3.0, 0.02);
}

TEST(ModalityDropout, OutOfRangeProbabilityIsConfigError) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(SampleModalityMask(rng, 0.6), Error);
  TrainConfig cfg;
  cfg.modality_drop_prob = -0.1;
  EXPECT_THROW(cfg.Validate(), Error);
}

class TrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { samples_ = new std::vector<Sample>(SmallSamples(12)); }
  static void TearDownTestSuite() { delete samples_; }
  static const std::vector<Sample>& samples() { return *samples_; }
  static std::vector<Sample>* samples_;
};
std::vector<Sample>* TrainingTest::samples_ = nullptr;

TEST_F(TrainingTest, ZeroGazeWeightLeavesGazeHeadUntouched) {
  AvModel model = AvModel::Create(SmallModel(), 1);
  const auto batch = Pointers(samples(), 4);
  TrainConfig cfg;
  cfg.loss_weights.gaze = 0.0;
  const StepLosses l = ComputeBatchGradients(model, batch, ModalityMask::AudioVisual(), cfg, ContextFor(samples()));
  EXPECT_EQ(model.params().MaxAbsGrad(AvModel::kHeadGazePrefix), 0.0);
  EXPECT_GT(model.params().MaxAbsGrad(AvModel::kHeadPosePrefix), 0.0);
  ASSERT_TRUE(l.l_pg.has_value());
  EXPECT_DOUBLE_EQ(l.l_total, *l.l_hp);
}

TEST_F(TrainingTest, DisabledGazeLossIsAbsentNotZero) {
  AvModel model = AvModel::Create(SmallModel(), 2);
  TrainConfig cfg;
  cfg.use_gaze_loss = false;
  const StepLosses l =
      ComputeBatchGradients(model, Pointers(samples(), 3), ModalityMask::VisualOnly(), cfg, ContextFor(samples()));
  EXPECT_FALSE(l.l_pg.has_value());
  EXPECT_TRUE(l.l_hp.has_value());
  EXPECT_EQ(model.params().MaxAbsGrad(AvModel::kHeadGazePrefix), 0.0);
  cfg.use_headpose_loss = false;
  EXPECT_THROW(cfg.Validate(), Error);
}

TEST_F(TrainingTest, LossesAndGradientsAreAdditive) {
  AvModel model = AvModel::Create(SmallModel(), 3);
  const auto batch = Pointers(samples(), 4);
  const TrainContext ctx = ContextFor(samples());
  TrainConfig both;
  both.loss_weights = {0.7, 1.3};
  TrainConfig hp = both, pg = both;
  hp.use_gaze_loss = false;
  pg.use_headpose_loss = false;
  const StepLosses lb = ComputeBatchGradients(model, batch, ModalityMask::AudioVisual(), both, ctx);
  const auto gb = Grads(model);
  const StepLosses lh = ComputeBatchGradients(model, batch, ModalityMask::AudioVisual(), hp, ctx);
  const auto gh = Grads(model);
  const StepLosses lp = ComputeBatchGradients(model, batch, ModalityMask::AudioVisual(), pg, ctx);
  const auto gp = Grads(model);
  EXPECT_NEAR(lb.l_total, 0.7 * *lb.l_hp + 1.3 * *lb.l_pg, 1e-15);
  EXPECT_NEAR(lb.l_total, lh.l_total + lp.l_total, 1e-12);
  for (std::size_t i = 0; i < gb.size(); ++i) {
    EXPECT_LT((gb[i] - gh[i] - gp[i]).cwiseAbs().maxCoeff(), 1e-12) << model.params()[static_cast<int>(i)].name;
  }
}

TEST_F(TrainingTest, BatchLossIsTheMeanOfPerSampleLosses) {
  AvModel model = AvModel::Create(SmallModel(), 4);
  const auto batch = Pointers(samples(), 4);
  const TrainContext ctx = ContextFor(samples());
  TrainConfig cfg;
  double sum = 0.0;
  for (const Sample* s : batch) {
    const std::vector<const Sample*> one{s};
    sum += ComputeBatchGradients(model, one, ModalityMask::AudioVisual(), cfg, ctx).l_total;
  }
  EXPECT_NEAR(ComputeBatchGradients(model, batch, ModalityMask::AudioVisual(), cfg, ctx).l_total, sum / 4, 1e-12);
}

TEST_F(TrainingTest, NonFiniteLossNamesStepAndBatch) {
  AvModel model = AvModel::Create(SmallModel(), 5);
  nn::Adam adam(model.params());
  Sample bad = samples()[0];
  bad.headpose[0] = std::numeric_limits<double>::quiet_NaN();
  const std::vector<const Sample*> batch{&bad};
  std::mt19937_64 rng(5);
  try {
    TrainStep(model, adam, batch, TrainConfig{}, ContextFor(samples()), rng, 42);
    FAIL() << "expected kNonFinite";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
    EXPECT_NE(std::string(e.what()).find("step 42"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(bad.id), std::string::npos);
  }
}

TEST_F(TrainingTest, ZeroEpochsReturnsTheInitialisation) {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 9;
  const TrainResult r = Train(SmallModel(), cfg, samples(), {});
  EXPECT_EQ(r.checkpoint.model.BackboneHash(), AvModel::Create(SmallModel(), 9).BackboneHash());
  EXPECT_TRUE(r.steps.empty());
}

TEST_F(TrainingTest, SameSeedSameRun) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.modality_drop_prob = 0.5;
  const TrainResult a = Train(SmallModel(), cfg, samples(), {});
  const TrainResult b = Train(SmallModel(), cfg, samples(), {});
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].losses.l_total, b.steps[i].losses.l_total);
    EXPECT_EQ(a.steps[i].losses.mask, b.steps[i].losses.mask);
  }
  EXPECT_EQ(a.checkpoint.model.params().Hash([](const nn::Parameter&) { return true; }),
            b.checkpoint.model.params().Hash([](const nn::Parameter&) { return true; }));
}

TEST_F(TrainingTest, ResumeIsBitIdenticalToAnUninterruptedRun) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  const auto dir = avattn::testing::ScratchDir("resume");
  TrainOptions full;
  full.out_dir = dir / "full";
  const TrainResult a = Train(SmallModel(), cfg, samples(), full);

  TrainOptions resumed;
  resumed.out_dir = dir / "full";
  resumed.resume_from = dir / "full" / "checkpoints" / "epoch_0001.ckpt";
  const TrainResult b = Train(SmallModel(), cfg, samples(), resumed);
  const auto all = [](const nn::Parameter&) { return true; };
  EXPECT_EQ(a.checkpoint.model.params().Hash(all), b.checkpoint.model.params().Hash(all));
  ASSERT_EQ(b.epochs.size(), 2u);
  EXPECT_EQ(a.epochs[2].mean_total, b.epochs[1].mean_total);
  EXPECT_EQ(a.checkpoint.train->optimizer.second_moments().back(), b.checkpoint.train->optimizer.second_moments().back());

  // The log keeps exactly one line per step and per epoch.
  std::ifstream log(dir / "full" / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, static_cast<int>(a.steps.size() + a.epochs.size()));

  TrainConfig other = cfg;
  other.learning_rate = 2e-3;
  EXPECT_THROW(Train(SmallModel(), other, samples(), resumed), Error);
}

TEST(TrainingSmoke, OverfitsASmallSet) {
  std::vector<Sample> samples = SmallSamples(40, 11);
  samples.resize(std::min<std::size_t>(samples.size(), 64));
  for (auto& s : samples) s.split = Split::kTrain;
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 8;
  cfg.epochs = 25;  // 8 steps per epoch
  cfg.modality_drop_prob = 0.0;
  const TrainResult r = Train(SmallModel(), cfg, samples, {});
  ASSERT_GE(r.steps.size(), 200u);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 16; ++i) {
    first += r.steps[i].losses.l_total;
    last += r.steps[r.steps.size() - 1 - i].losses.l_total;
  }
  EXPECT_LT(last, 0.5 * first) << "first " << first / 16 << " last " << last / 16;
}

}  // namespace
}  // namespace avattn
