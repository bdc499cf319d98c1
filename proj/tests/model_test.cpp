// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/model.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "avattn/checkpoint.hpp"
#include "avattn/error.hpp"
#include "oracles.hpp"

namespace avattn {
namespace {

using avattn::testing::CentralDifference;
using avattn::testing::RelativeError;

ModelInput RandomInput(const ModelConfig& cfg, std::mt19937_64& rng, int audio_frames = 9) {
  ModelInput in;
  for (int t = 0; t < cfg.chunk_len; ++t) {
    const int n = cfg.input_resolution;
    in.frames.push_back({nn::RandomNormal(n * n, 3, 0.3, rng), n, n});
  }
  in.audio = nn::RandomNormal(audio_frames, cfg.audio_input_dim, 1.0, rng);
  return in;
}

double MaxDiff(const ForwardOutput& a, const ForwardOutput& b) {
  return std::max({(a.headpose - b.headpose).cwiseAbs().maxCoeff(), (a.gaze - b.gaze).cwiseAbs().maxCoeff(),
                   (a.embedding - b.embedding).cwiseAbs().maxCoeff()});
}

TEST(Model, ShapesFollowTheConfig) {
  const ModelConfig cfg = ModelConfig::Tiny();
  const AvModel model = AvModel::Create(cfg, 1);
  std::mt19937_64 rng(1);
  const ModelInput in = RandomInput(cfg, rng);
  EXPECT_EQ(model.EncodeFrames(in.frames).rows(), cfg.chunk_len);
  EXPECT_EQ(model.EncodeFrames(in.frames).cols(), cfg.visual_feat_dim);
  EXPECT_EQ(model.EncodeSequence(model.EncodeFrames(in.frames)).size(), cfg.visual_feat_dim);
  EXPECT_EQ(model.EncodeAudio(in.audio).size(), cfg.audio_embed_dim);
  const ForwardOutput out = model.Forward(in, ModalityMask::AudioVisual());
  EXPECT_EQ(out.embedding.size(), cfg.fused_dim);
  EXPECT_TRUE(out.headpose.allFinite());
  EXPECT_TRUE(out.gaze.allFinite());
}

TEST(Model, DefaultFusionInputIsBothEmbeddingsPlusMaskBits) {
  const AvModel model = AvModel::Create(ModelConfig{}, 2);
  const auto& ps = model.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[static_cast<int>(i)].name == "fusion.fc1.weight") {
      EXPECT_EQ(ps[static_cast<int>(i)].value.cols(), 256 + 256 + 2);
      return;
    }
  }
  FAIL() << "fusion.fc1.weight not found";
}

TEST(Model, DisabledModalityInputIsIgnored) {
  const ModelConfig cfg = ModelConfig::Tiny();
  const AvModel model = AvModel::Create(cfg, 3);
  std::mt19937_64 rng(3);
  ModelInput a = RandomInput(cfg, rng);
  ModelInput b = a;
  b.audio = nn::RandomNormal(5, cfg.audio_input_dim, 2.0, rng);
  EXPECT_EQ(MaxDiff(model.Forward(a, ModalityMask::VisualOnly()), model.Forward(b, ModalityMask::VisualOnly())), 0.0);
  ModelInput c = a;
  c.frames = RandomInput(cfg, rng).frames;
  EXPECT_EQ(MaxDiff(model.Forward(a, ModalityMask::AudioOnly()), model.Forward(c, ModalityMask::AudioOnly())), 0.0);
  ModelInput no_audio = a;
  no_audio.audio.resize(0, 0);
  EXPECT_NO_THROW(model.Forward(no_audio, ModalityMask::VisualOnly()));
  EXPECT_THROW(model.Forward(a, ModalityMask{false, false}), Error);
}

TEST(Model, AudioEncoderIgnoresFrameOrderAndDuplication) {
  const ModelConfig cfg = ModelConfig::Tiny();
  const AvModel model = AvModel::Create(cfg, 4);
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd audio = nn::RandomNormal(6, cfg.audio_input_dim, 1.0, rng);
  const Eigen::MatrixXd reversed = audio.colwise().reverse();
  Eigen::MatrixXd doubled(12, cfg.audio_input_dim);
  doubled << audio, audio;
  const Eigen::VectorXd z = model.EncodeAudio(audio);
  EXPECT_LT((model.EncodeAudio(reversed) - z).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((model.EncodeAudio(doubled) - z).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, VisualPathIsOrderSensitive) {
  const ModelConfig cfg = ModelConfig::Tiny();
  const AvModel model = AvModel::Create(cfg, 5);
  std::mt19937_64 rng(5);
  const ModelInput in = RandomInput(cfg, rng);
  ModelInput rev = in;
  std::reverse(rev.frames.begin(), rev.frames.end());
  EXPECT_GT(MaxDiff(model.Forward(in, ModalityMask::VisualOnly()), model.Forward(rev, ModalityMask::VisualOnly())),
            1e-9);
}

TEST(Model, FramesShareOneEncoder) {
  const ModelConfig cfg = ModelConfig::Tiny();
  const AvModel model = AvModel::Create(cfg, 6);
  std::mt19937_64 rng(6);
  ModelInput in = RandomInput(cfg, rng);
  in.frames[4] = in.frames[1];
  const Eigen::MatrixXd feats = model.EncodeFrames(in.frames);
  EXPECT_EQ((feats.row(4) - feats.row(1)).cwiseAbs().maxCoeff(), 0.0);
  for (const auto& p : model.params().params()) {
    EXPECT_EQ(p.name.find("frame1"), std::string::npos) << p.name;
  }
}

TEST(Model, DroppedEncoderReceivesExactlyZeroGradient) {
  const ModelConfig cfg = ModelConfig::Tiny();
  AvModel model = AvModel::Create(cfg, 7);
  std::mt19937_64 rng(7);
  const ModelInput in = RandomInput(cfg, rng);
  const Vector6d dh = Vector6d::Ones();
  const Eigen::Vector3d dg(0.3, -0.2, 0.5);

  model.params().ZeroGrad();
  ForwardTape tape;
  model.Forward(in, ModalityMask::VisualOnly(), tape);
  model.Backward(tape, dh, dg);
  EXPECT_EQ(model.params().MaxAbsGrad(AvModel::kAudioPrefix), 0.0);
  EXPECT_GT(model.params().MaxAbsGrad(AvModel::kVisualPrefix), 0.0);

  model.params().ZeroGrad();
  ForwardTape tape2;
  model.Forward(in, ModalityMask::AudioOnly(), tape2);
  model.Backward(tape2, dh, dg);
  EXPECT_EQ(model.params().MaxAbsGrad(AvModel::kVisualPrefix), 0.0);
  EXPECT_EQ(model.params().MaxAbsGrad(AvModel::kTemporalPrefix), 0.0);
  EXPECT_GT(model.params().MaxAbsGrad(AvModel::kAudioPrefix), 0.0);
}

TEST(Model, GazeHeadSeesHeadPosePrediction) {
  const ModelConfig cfg = ModelConfig::Tiny();
  const AvModel model = AvModel::Create(cfg, 8);
  std::mt19937_64 rng(8);
  const Eigen::VectorXd z = nn::RandomNormal(cfg.fused_dim, 1, 1.0, rng);
  Vector6d h = model.PredictHeadpose(z);
  const Eigen::Vector3d g = model.PredictGaze(h, z);
  h[0] += 1.0;
  EXPECT_GT((model.PredictGaze(h, z) - g).norm(), 0.0);
}

TEST(Model, BackwardMatchesFiniteDifferences) {
  ModelConfig cfg = ModelConfig::Tiny();
  cfg.chunk_len = 3;
  AvModel model = AvModel::Create(cfg, 9);
  std::mt19937_64 rng(9);
  const ModelInput in = RandomInput(cfg, rng, 4);
  const Vector6d rh = nn::RandomNormal(6, 1, 1.0, rng);
  const Eigen::Vector3d rg = nn::RandomNormal(3, 1, 1.0, rng);
  for (const ModalityMask mask : {ModalityMask::AudioVisual(), ModalityMask::VisualOnly(), ModalityMask::AudioOnly()}) {
    auto loss = [&] {
      const ForwardOutput out = model.Forward(in, mask);
      return rh.dot(out.headpose) + rg.dot(out.gaze);
    };
    model.params().ZeroGrad();
    ForwardTape tape;
    model.Forward(in, mask, tape);
    model.Backward(tape, rh, rg);
    int checked = 0;
    for (auto& p : model.params().params()) {
      // A strided sample of every tensor keeps the check fast.
      for (Eigen::Index k = 0; k < p.value.size(); k += 7) {
        const double numeric = CentralDifference(loss, p.value.data()[k], 1e-5);
        EXPECT_LT(RelativeError(p.grad.data()[k], numeric, 1e-6), 1e-4) << mask.Name() << " " << p.name << "[" << k << "]";
        ++checked;
      }
    }
    EXPECT_GT(checked, 100);
  }
}

TEST(Model, BatchForwardMatchesSingleForward) {
  const ModelConfig cfg = ModelConfig::Tiny();
  const AvModel model = AvModel::Create(cfg, 10);
  std::mt19937_64 rng(10);
  std::vector<ModelInput> inputs{RandomInput(cfg, rng), RandomInput(cfg, rng, 12)};
  const ForwardBatchOutput batch = model.ForwardBatch(inputs, ModalityMask::AudioVisual());
  for (int i = 0; i < 2; ++i) {
    const ForwardOutput single = model.Forward(inputs[i], ModalityMask::AudioVisual());
    EXPECT_LT((batch.gaze.row(i).transpose() - single.gaze).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((batch.embedding.row(i).transpose() - single.embedding).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Model, CreationIsSeedDeterministic) {
  const ModelConfig cfg = ModelConfig::Tiny();
  EXPECT_EQ(AvModel::Create(cfg, 11).BackboneHash(), AvModel::Create(cfg, 11).BackboneHash());
  EXPECT_NE(AvModel::Create(cfg, 11).BackboneHash(), AvModel::Create(cfg, 12).BackboneHash());
}

TEST(Model, FullDepthBuildsTwoBlocksPerStage) {
  ModelConfig cfg = ModelConfig::Tiny();
  cfg.depth = BackboneDepth::kFull;
  cfg.input_resolution = 16;
  const AvModel model = AvModel::Create(cfg, 13);
  std::mt19937_64 rng(13);
  EXPECT_TRUE(model.Forward(RandomInput(cfg, rng), ModalityMask::AudioVisual()).gaze.allFinite());
  EXPECT_NE(cfg.Hash(), ModelConfig::Tiny().Hash());
}

TEST(Checkpoint, RoundTripReproducesOutputsBitForBit) {
  const ModelConfig cfg = ModelConfig::Tiny();
  Checkpoint ck;
  ck.model = AvModel::Create(cfg, 14);
  ck.seed = 14;
  ck.audio_norm.mean = Eigen::VectorXd::Constant(cfg.audio_input_dim, 0.5);
  ck.audio_norm.std = Eigen::VectorXd::Constant(cfg.audio_input_dim, 2.0);
  ck.label_norm.std[2] = 3.0;
  ck.train_config = "lr=0.1";
  const auto dir = avattn::testing::ScratchDir("ckpt");
  SaveCheckpoint(dir / "m.ckpt", ck);
  const Checkpoint back = LoadCheckpoint(dir / "m.ckpt", cfg);

  std::mt19937_64 rng(14);
  const ModelInput in = RandomInput(cfg, rng);
  EXPECT_EQ(MaxDiff(ck.model.Forward(in, ModalityMask::AudioVisual()), back.model.Forward(in, ModalityMask::AudioVisual())),
            0.0);
  EXPECT_EQ(back.model.BackboneHash(), ck.model.BackboneHash());
  EXPECT_EQ(back.audio_norm.std, ck.audio_norm.std);
  EXPECT_EQ(back.label_norm.std, ck.label_norm.std);
  EXPECT_EQ(back.train_config, "lr=0.1");
  EXPECT_FALSE(back.train.has_value());

  ModelConfig other = cfg;
  other.fused_dim = 9;
  EXPECT_THROW(LoadCheckpoint(dir / "m.ckpt", other), Error);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto dir = avattn::testing::ScratchDir("ckpt_bad");
  std::ofstream(dir / "bad.ckpt") << "AVCKnonsense";
  EXPECT_THROW(LoadCheckpoint(dir / "bad.ckpt"), Error);
  EXPECT_THROW(LoadCheckpoint(dir / "missing.ckpt"), Error);
}

}  // namespace
}  // namespace avattn
