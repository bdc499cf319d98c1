// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/model.hpp"

#include <cmath>
#include <fmt/format.h>
#include <random>

#include "avattn/error.hpp"
#include "avattn/hash.hpp"

namespace avattn {

using nn::FeatureMap;
using nn::ParamGroup;

int ModelConfig::ResolvedConvWidth() const {
  if (conv_width > 0) return conv_width;
  return depth == BackboneDepth::kFull ? 64 : 8;
}

void ModelConfig::Validate() const {
  Require(visual_feat_dim > 0 && audio_embed_dim > 0 && temporal_hidden > 0 && fused_dim > 0 &&
              input_resolution > 0 && audio_input_dim > 0 && chunk_len > 0 && conv_width >= 0,
          ErrorKind::kConfig, "model config: all dimensions must be positive");
  Require(headpose_dim == 6, ErrorKind::kConfig, "model config: headpose_dim must be 6");
  Require(gaze_dim == 3, ErrorKind::kConfig, "model config: gaze_dim must be 3");
}

std::string ModelConfig::Canonical() const {
  return fmt::format(
      "model/v1 visual={} audio={} temporal={} fused={} res={} hp={} gaze={} audio_in={} chunk={} depth={} "
      "width={}",
      visual_feat_dim, audio_embed_dim, temporal_hidden, fused_dim, input_resolution, headpose_dim, gaze_dim,
      audio_input_dim, chunk_len, depth == BackboneDepth::kFull ? "full" : "small", ResolvedConvWidth());
}

std::string ModelConfig::Hash() const { return Sha256Hex(Canonical()); }

ModelConfig ModelConfig::Tiny() {
  ModelConfig c;
  c.visual_feat_dim = 8;
  c.audio_embed_dim = 8;
  c.temporal_hidden = 8;
  c.fused_dim = 8;
  c.input_resolution = 8;
  c.audio_input_dim = 8;
  c.conv_width = 2;
  return c;
}

void ModalityMask::Validate() const {
  Require(use_visual || use_audio, ErrorKind::kInvalidMask, "modality mask: at least one modality must be enabled");
}

std::string ModalityMask::Name() const {
  if (use_visual && use_audio) return "av";
  if (use_visual) return "visual";
  if (use_audio) return "audio";
  return "none";
}

ModalityMask ModalityMask::Parse(const std::string& name) {
  if (name == "av") return AudioVisual();
  if (name == "visual") return VisualOnly();
  if (name == "audio") return AudioOnly();
  Fail(ErrorKind::kInvalidMask, fmt::format("unknown modality '{}' (expected audio, visual or av)", name));
}

FeatureMap ImageToFeatureMap(const Image& image) {
  FeatureMap m;
  m.height = image.height;
  m.width = image.width;
  m.data.resize(static_cast<Eigen::Index>(image.height) * image.width, 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.pixel(x, y);
      for (int c = 0; c < 3; ++c) m.data(y * image.width + x, c) = p[c] / 255.0 - 0.5;
    }
  }
  return m;
}

struct AvModel::FrameTape {
  struct Block {
    FeatureMap input;
    nn::Conv2d::Cache c1, c2, sc;
    FeatureMap a1;
    FeatureMap out;
  };
  nn::Conv2d::Cache stem_cache;
  FeatureMap stem_out;
  std::vector<Block> blocks;
  Eigen::VectorXd pooled;
  int last_hw = 0;
};

struct ForwardTape::Impl {
  ModalityMask mask;
  std::vector<AvModel::FrameTape> frames;
  Eigen::MatrixXd per_frame;
  nn::Lstm::Cache lstm_forward, lstm_backward;
  Eigen::VectorXd temporal_concat;
  Eigen::VectorXd audio_pooled, audio_hidden;
  Eigen::VectorXd fuse_input, fuse_hidden, embedding;
  Eigen::VectorXd gaze_input;
};

ForwardTape::ForwardTape() : impl_(std::make_unique<Impl>()) {}
ForwardTape::~ForwardTape() = default;
ForwardTape::ForwardTape(ForwardTape&&) noexcept = default;
ForwardTape& ForwardTape::operator=(ForwardTape&&) noexcept = default;

AvModel AvModel::Create(const ModelConfig& config, std::uint64_t seed) {
  config.Validate();
  AvModel m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  auto& ps = m.params_;
  const auto he = [](int fan_in) { return std::sqrt(2.0 / fan_in); };
  const auto lecun = [](int fan_in) { return std::sqrt(1.0 / fan_in); };

  const int w0 = config.ResolvedConvWidth();
  m.stem_ = nn::Conv2d::Create(ps, "visual.stem", ParamGroup::kBackbone, 3, w0, 3, 2, he(27), rng);
  int channels = w0;
  for (int stage = 0; stage < 4; ++stage) {
    const int out = w0 << stage;
    for (int b = 0; b < config.BlocksPerStage(); ++b) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      const std::string name = fmt::format("visual.stage{}.block{}", stage, b);
      ResidualBlock blk;
      blk.conv1 = nn::Conv2d::Create(ps, name + ".conv1", ParamGroup::kBackbone, channels, out, 3, stride,
                                     he(channels * 9), rng);
      blk.conv2 = nn::Conv2d::Create(ps, name + ".conv2", ParamGroup::kBackbone, out, out, 3, 1,
                                     0.5 * he(out * 9), rng);
      blk.projection = stride != 1 || channels != out;
      if (blk.projection) {
        blk.shortcut = nn::Conv2d::Create(ps, name + ".shortcut", ParamGroup::kBackbone, channels, out, 1,
                                          stride, lecun(channels), rng);
      }
      m.blocks_.push_back(blk);
      channels = out;
    }
  }
  m.visual_fc_ = nn::Linear::Create(ps, "visual.fc", ParamGroup::kBackbone, channels, config.visual_feat_dim,
                                    lecun(channels), rng);

  const int H = config.temporal_hidden;
  m.lstm_forward_ = nn::Lstm::Create(ps, "temporal.lstm_fwd", ParamGroup::kBackbone, config.visual_feat_dim, H, rng);
  m.lstm_backward_ = nn::Lstm::Create(ps, "temporal.lstm_bwd", ParamGroup::kBackbone, config.visual_feat_dim, H, rng);
  m.temporal_fc_ = nn::Linear::Create(ps, "temporal.fc", ParamGroup::kBackbone, 2 * H, config.visual_feat_dim,
                                      lecun(2 * H), rng);

  const int A = config.audio_embed_dim;
  m.audio_fc1_ = nn::Linear::Create(ps, "audio.fc1", ParamGroup::kBackbone, config.audio_input_dim, A,
                                    he(config.audio_input_dim), rng);
  m.audio_fc2_ = nn::Linear::Create(ps, "audio.fc2", ParamGroup::kBackbone, A, A, lecun(A), rng);

  const int fuse_in = config.visual_feat_dim + A + 2;
  m.fusion_fc1_ = nn::Linear::Create(ps, "fusion.fc1", ParamGroup::kBackbone, fuse_in, config.fused_dim,
                                     he(fuse_in), rng);
  m.fusion_fc2_ = nn::Linear::Create(ps, "fusion.fc2", ParamGroup::kBackbone, config.fused_dim, config.fused_dim,
                                     lecun(config.fused_dim), rng);

  m.head_pose_ = nn::Linear::Create(ps, "head_pose.fc", ParamGroup::kHeadPose, config.fused_dim,
                                    config.headpose_dim, lecun(config.fused_dim), rng);
  const int gaze_in = config.headpose_dim + config.fused_dim;
  m.head_gaze_ = nn::Linear::Create(ps, "head_gaze.fc", ParamGroup::kHeadGaze, gaze_in, config.gaze_dim,
                                    lecun(gaze_in), rng);
  // Start the gaze head near the frontal direction so early predictions are
  // never near zero length.
  ps[m.head_gaze_.bias].value.col(0) = kFrontalAxis;
  return m;
}

Eigen::VectorXd AvModel::EncodeFrame(const FeatureMap& frame, FrameTape* tape) const {
  const int res = config_.input_resolution;
  if (frame.height != res || frame.width != res || frame.channels() != 3) {
    Fail(ErrorKind::kShape, fmt::format("visual encoder: expected {0}x{0}x3 frames, got {1}x{2}x{3}", res,
                                        frame.height, frame.width, frame.channels()));
  }
  FeatureMap x = stem_.Forward(params_, frame, tape ? &tape->stem_cache : nullptr);
  x.data = x.data.cwiseMax(0.0);
  if (tape) {
    tape->stem_out = x;
    tape->blocks.resize(blocks_.size());
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const ResidualBlock& blk = blocks_[b];
    FrameTape::Block* bt = tape ? &tape->blocks[b] : nullptr;
    FeatureMap a1 = blk.conv1.Forward(params_, x, bt ? &bt->c1 : nullptr);
    a1.data = a1.data.cwiseMax(0.0);
    FeatureMap out = blk.conv2.Forward(params_, a1, bt ? &bt->c2 : nullptr);
    if (blk.projection) {
      out.data += blk.shortcut.Forward(params_, x, bt ? &bt->sc : nullptr).data;
    } else {
      out.data += x.data;
    }
    out.data = out.data.cwiseMax(0.0);
    if (bt) {
      bt->input = std::move(x);
      bt->a1 = std::move(a1);
      bt->out = out;
    }
    x = std::move(out);
  }
  const Eigen::VectorXd pooled = x.data.colwise().mean().transpose();
  if (tape) {
    tape->pooled = pooled;
    tape->last_hw = x.height * x.width;
  }
  return visual_fc_.Forward(params_, pooled);
}

void AvModel::BackwardFrame(const FrameTape& tape, const Eigen::VectorXd& d_feature) {
  const Eigen::VectorXd d_pooled = visual_fc_.Backward(params_, tape.pooled, d_feature);
  FeatureMap d;
  const FeatureMap& last = tape.blocks.empty() ? tape.stem_out : tape.blocks.back().out;
  d.height = last.height;
  d.width = last.width;
  d.data = Eigen::MatrixXd::Ones(tape.last_hw, 1) * (d_pooled.transpose() / tape.last_hw);
  for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
    const ResidualBlock& blk = blocks_[b];
    const FrameTape::Block& bt = tape.blocks[b];
    FeatureMap d_pre = d;
    d_pre.data = (bt.out.data.array() > 0.0).select(d.data, 0.0);
    FeatureMap d_a1 = blk.conv2.Backward(params_, bt.c2, d_pre);
    d_a1.data = (bt.a1.data.array() > 0.0).select(d_a1.data, 0.0);
    FeatureMap d_x = blk.conv1.Backward(params_, bt.c1, d_a1);
    if (blk.projection) {
      d_x.data += blk.shortcut.Backward(params_, bt.sc, d_pre).data;
    } else {
      d_x.data += d_pre.data;
    }
    d = std::move(d_x);
  }
  d.data = (tape.stem_out.data.array() > 0.0).select(d.data, 0.0);
  stem_.Backward(params_, tape.stem_cache, d);
}

Eigen::MatrixXd AvModel::EncodeFrames(std::span<const FeatureMap> frames) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(frames.size()), config_.visual_feat_dim);
  for (std::size_t i = 0; i < frames.size(); ++i) out.row(i) = EncodeFrame(frames[i], nullptr).transpose();
  return out;
}

std::vector<Eigen::MatrixXd> AvModel::EncodeFramesBatch(std::span<const std::vector<FeatureMap>> batch) const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(batch.size());
  for (const auto& frames : batch) out.push_back(EncodeFrames(frames));
  return out;
}

Eigen::VectorXd AvModel::EncodeSequence(const Eigen::MatrixXd& per_frame) const {
  if (per_frame.rows() != config_.chunk_len || per_frame.cols() != config_.visual_feat_dim) {
    Fail(ErrorKind::kShape, fmt::format("temporal encoder: expected {}x{} input, got {}x{}", config_.chunk_len,
                                        config_.visual_feat_dim, per_frame.rows(), per_frame.cols()));
  }
  const int H = config_.temporal_hidden;
  Eigen::VectorXd concat(2 * H);
  concat << lstm_forward_.Forward(params_, per_frame, false, nullptr),
      lstm_backward_.Forward(params_, per_frame, true, nullptr);
  return temporal_fc_.Forward(params_, concat);
}

Eigen::VectorXd AvModel::EncodeAudio(const Eigen::MatrixXd& features) const {
  if (features.rows() == 0 || features.cols() != config_.audio_input_dim) {
    Fail(ErrorKind::kShape, fmt::format("audio encoder: expected T x {} features with T > 0, got {}x{}",
                                        config_.audio_input_dim, features.rows(), features.cols()));
  }
  const Eigen::VectorXd pooled = features.colwise().mean().transpose();
  return audio_fc2_.Forward(params_, nn::Relu(audio_fc1_.Forward(params_, pooled)));
}

namespace {

Eigen::VectorXd FuseInput(const Eigen::VectorXd& z_visual, const Eigen::VectorXd& z_audio,
                          const ModalityMask& mask, int visual_dim, int audio_dim) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(visual_dim + audio_dim + 2);
  if (mask.use_visual) z.head(visual_dim) = z_visual;
  if (mask.use_audio) z.segment(visual_dim, audio_dim) = z_audio;
  z[visual_dim + audio_dim] = mask.use_visual ? 1.0 : 0.0;
  z[visual_dim + audio_dim + 1] = mask.use_audio ? 1.0 : 0.0;
  return z;
}

}  // namespace

Eigen::VectorXd AvModel::Fuse(const Eigen::VectorXd& z_visual, const Eigen::VectorXd& z_audio,
                              const ModalityMask& mask) const {
  mask.Validate();
  if ((mask.use_visual && z_visual.size() != config_.visual_feat_dim) ||
      (mask.use_audio && z_audio.size() != config_.audio_embed_dim)) {
    Fail(ErrorKind::kShape, "fuse: modality embedding has the wrong dimension");
  }
  const Eigen::VectorXd z = FuseInput(z_visual, z_audio, mask, config_.visual_feat_dim, config_.audio_embed_dim);
  return fusion_fc2_.Forward(params_, nn::Relu(fusion_fc1_.Forward(params_, z)));
}

Vector6d AvModel::PredictHeadpose(const Eigen::VectorXd& embedding) const {
  return head_pose_.Forward(params_, embedding);
}

Eigen::Vector3d AvModel::PredictGaze(const Vector6d& headpose, const Eigen::VectorXd& embedding) const {
  Eigen::VectorXd in(headpose.size() + embedding.size());
  in << headpose, embedding;
  return head_gaze_.Forward(params_, in);
}

ForwardOutput AvModel::ForwardImpl(const ModelInput& input, const ModalityMask& mask, ForwardTape* tape) const {
  mask.Validate();
  ForwardTape::Impl* t = tape ? &tape->impl() : nullptr;
  if (t) t->mask = mask;

  Eigen::VectorXd z_visual, z_audio;
  if (mask.use_visual) {
    if (!input.has_visual()) Fail(ErrorKind::kInvalidMask, "forward: visual modality requested but no frames given");
    if (static_cast<int>(input.frames.size()) != config_.chunk_len) {
      Fail(ErrorKind::kShape, fmt::format("forward: expected {} frames, got {}", config_.chunk_len,
                                          input.frames.size()));
    }
    Eigen::MatrixXd per_frame(config_.chunk_len, config_.visual_feat_dim);
    if (t) t->frames.resize(input.frames.size());
    for (std::size_t i = 0; i < input.frames.size(); ++i) {
      per_frame.row(i) = EncodeFrame(input.frames[i], t ? &t->frames[i] : nullptr).transpose();
    }
    const int H = config_.temporal_hidden;
    Eigen::VectorXd concat(2 * H);
    concat << lstm_forward_.Forward(params_, per_frame, false, t ? &t->lstm_forward : nullptr),
        lstm_backward_.Forward(params_, per_frame, true, t ? &t->lstm_backward : nullptr);
    z_visual = temporal_fc_.Forward(params_, concat);
    if (t) {
      t->per_frame = std::move(per_frame);
      t->temporal_concat = std::move(concat);
    }
  }
  if (mask.use_audio) {
    if (!input.has_audio()) Fail(ErrorKind::kInvalidMask, "forward: audio modality requested but no features given");
    if (input.audio.cols() != config_.audio_input_dim) {
      Fail(ErrorKind::kShape, fmt::format("forward: expected {} audio coefficients, got {}",
                                          config_.audio_input_dim, input.audio.cols()));
    }
    const Eigen::VectorXd pooled = input.audio.colwise().mean().transpose();
    const Eigen::VectorXd hidden = nn::Relu(audio_fc1_.Forward(params_, pooled));
    z_audio = audio_fc2_.Forward(params_, hidden);
    if (t) {
      t->audio_pooled = pooled;
      t->audio_hidden = hidden;
    }
  }

  const Eigen::VectorXd z = FuseInput(z_visual, z_audio, mask, config_.visual_feat_dim, config_.audio_embed_dim);
  const Eigen::VectorXd hidden = nn::Relu(fusion_fc1_.Forward(params_, z));
  ForwardOutput out;
  out.embedding = fusion_fc2_.Forward(params_, hidden);
  out.headpose = head_pose_.Forward(params_, out.embedding);
  Eigen::VectorXd gaze_in(out.headpose.size() + out.embedding.size());
  gaze_in << out.headpose, out.embedding;
  out.gaze = head_gaze_.Forward(params_, gaze_in);
  if (t) {
    t->fuse_input = z;
    t->fuse_hidden = hidden;
    t->embedding = out.embedding;
    t->gaze_input = std::move(gaze_in);
  }
  return out;
}

ForwardOutput AvModel::Forward(const ModelInput& input, const ModalityMask& mask) const {
  return ForwardImpl(input, mask, nullptr);
}

ForwardOutput AvModel::Forward(const ModelInput& input, const ModalityMask& mask, ForwardTape& tape) const {
  return ForwardImpl(input, mask, &tape);
}

ForwardBatchOutput AvModel::ForwardBatch(std::span<const ModelInput> inputs, const ModalityMask& mask) const {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  ForwardBatchOutput out;
  out.headpose.resize(n, config_.headpose_dim);
  out.gaze.resize(n, config_.gaze_dim);
  out.embedding.resize(n, config_.fused_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ForwardOutput o = Forward(inputs[i], mask);
    out.headpose.row(i) = o.headpose.transpose();
    out.gaze.row(i) = o.gaze.transpose();
    out.embedding.row(i) = o.embedding.transpose();
  }
  return out;
}

void AvModel::Backward(const ForwardTape& tape, const Vector6d& d_headpose, const Eigen::Vector3d& d_gaze) {
  const ForwardTape::Impl& t = tape.impl();
  const int hp = config_.headpose_dim;

  const Eigen::VectorXd d_gaze_in = head_gaze_.Backward(params_, t.gaze_input, d_gaze);
  const Eigen::VectorXd d_h = d_headpose + d_gaze_in.head(hp);
  Eigen::VectorXd d_embed = d_gaze_in.tail(config_.fused_dim);
  d_embed += head_pose_.Backward(params_, t.embedding, d_h);

  Eigen::VectorXd d_hidden = fusion_fc2_.Backward(params_, t.fuse_hidden, d_embed);
  d_hidden = nn::ReluBackward(t.fuse_hidden, d_hidden);
  const Eigen::VectorXd d_z = fusion_fc1_.Backward(params_, t.fuse_input, d_hidden);

  if (t.mask.use_audio) {
    const Eigen::VectorXd d_za = d_z.segment(config_.visual_feat_dim, config_.audio_embed_dim);
    Eigen::VectorXd d_ah = audio_fc2_.Backward(params_, t.audio_hidden, d_za);
    d_ah = nn::ReluBackward(t.audio_hidden, d_ah);
    audio_fc1_.Backward(params_, t.audio_pooled, d_ah);
  }
  if (t.mask.use_visual) {
    const Eigen::VectorXd d_zv = d_z.head(config_.visual_feat_dim);
    const Eigen::VectorXd d_concat = temporal_fc_.Backward(params_, t.temporal_concat, d_zv);
    const int H = config_.temporal_hidden;
    Eigen::MatrixXd d_seq = lstm_forward_.Backward(params_, t.lstm_forward, d_concat.head(H));
    d_seq += lstm_backward_.Backward(params_, t.lstm_backward, d_concat.tail(H));
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
      BackwardFrame(t.frames[i], d_seq.row(static_cast<Eigen::Index>(i)).transpose());
    }
  }
}

std::string AvModel::BackboneHash() const { return params_.GroupHash(ParamGroup::kBackbone); }

}  // namespace avattn
