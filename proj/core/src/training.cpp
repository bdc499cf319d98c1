// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "avattn/error.hpp"

namespace avattn {
namespace {

using nlohmann::json;

constexpr std::uint64_t kTrainRngSalt = 0x9e3779b97f4a7c15ULL;

ModalityMask Available(const Sample& s, const ModalityMask& requested) {
  return {requested.use_visual && s.has_visual(), requested.use_audio && s.has_audio()};
}

int MaskSlot(const ModalityMask& m) {
  if (m.use_visual && m.use_audio) return 0;
  return m.use_visual ? 1 : 2;
}

json OptionalJson(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json StepJson(const StepRecord& r) {
  return {{"type", "step"},
          {"step", r.step},
          {"epoch", r.epoch},
          {"l_hp", OptionalJson(r.losses.l_hp)},
          {"l_pg", OptionalJson(r.losses.l_pg)},
          {"l_total", r.losses.l_total},
          {"mask", r.losses.mask.Name()},
          {"grad_norm", r.losses.grad_norm}};
}

json EpochJson(const EpochRecord& r) {
  return {{"type", "epoch"},
          {"epoch", r.epoch},
          {"mean_total", r.mean_total},
          {"val_gaze_deg", OptionalJson(r.val_gaze_deg)},
          {"val_headpose_mse", OptionalJson(r.val_headpose_mse)},
          {"mask_histogram", {{"av", r.mask_counts[0]}, {"visual", r.mask_counts[1]}, {"audio", r.mask_counts[2]}}}};
}

std::string RngText(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::vector<std::string> KeptLogLines(const std::filesystem::path& path, long step, int epoch) {
  std::vector<std::string> kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (j.value("type", "") == "step" && j.value("step", 0L) < step) kept.push_back(line);
    if (j.value("type", "") == "epoch" && j.value("epoch", 0) < epoch) kept.push_back(line);
  }
  return kept;
}

double HeadposeMse(const AvModel& model, std::span<const Sample> samples, const TrainContext& ctx,
                   const ModalityMask& mask) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : samples) {
    const ModalityMask m = Available(s, mask);
    if (!m.use_visual && !m.use_audio) continue;
    const ForwardOutput out = model.Forward(MakeModelInput(s, ctx.audio_norm), m);
    sum += HeadposeLoss(out.headpose, NormalizeHeadpose(s.headpose, ctx.label_norm));
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace

void TrainConfig::Validate() const {
  Require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::kConfig, "train: learning_rate must be positive");
  Require(batch_size > 0, ErrorKind::kConfig, "train: batch_size must be positive");
  Require(epochs >= 0, ErrorKind::kConfig, "train: epochs must be non-negative");
  Require(modality_drop_prob >= 0.0 && modality_drop_prob <= 0.5, ErrorKind::kConfig,
          "train: modality_drop_prob must lie in [0, 0.5]");
  Require(grad_clip_norm > 0.0, ErrorKind::kConfig, "train: grad_clip_norm must be positive");
  Require(loss_weights.headpose >= 0.0 && loss_weights.gaze >= 0.0, ErrorKind::kConfig,
          "train: loss weights must be non-negative");
  Require(use_headpose_loss || use_gaze_loss, ErrorKind::kConfig, "train: at least one loss must be enabled");
  Require(checkpoint_every >= 0 && log_every >= 0, ErrorKind::kConfig, "train: intervals must be non-negative");
  if (fixed_mask) fixed_mask->Validate();
}

std::string TrainConfig::Canonical() const {
  return fmt::format(
      "train/v1 lr={:.17g} batch={} epochs={} seed={} drop={:.17g} w_hp={:.17g} w_pg={:.17g} clip={:.17g} hp={} "
      "pg={} mask={}",
      learning_rate, batch_size, epochs, seed, modality_drop_prob, loss_weights.headpose, loss_weights.gaze,
      grad_clip_norm, use_headpose_loss, use_gaze_loss, fixed_mask ? fixed_mask->Name() : "dropout");
}

ModalityMask SampleModalityMask(std::mt19937_64& rng, double drop_prob) {
  Require(drop_prob >= 0.0 && drop_prob <= 0.5, ErrorKind::kConfig, "modality dropout: probability must lie in [0, 0.5]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (true) {
    const bool drop_audio = u(rng) < drop_prob;
    const bool drop_visual = u(rng) < drop_prob;
    if (!(drop_audio && drop_visual)) return {!drop_visual, !drop_audio};
  }
}

StepLosses ComputeBatchGradients(AvModel& model, std::span<const Sample* const> batch, const ModalityMask& mask,
                                 const TrainConfig& cfg, const TrainContext& ctx) {
  Require(!batch.empty(), ErrorKind::kInvalidInput, "train step: empty batch");
  model.params().ZeroGrad();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double w_hp = cfg.use_headpose_loss ? cfg.loss_weights.headpose : 0.0;
  const double w_pg = cfg.use_gaze_loss ? cfg.loss_weights.gaze : 0.0;
  double sum_hp = 0.0;
  double sum_pg = 0.0;
  for (const Sample* s : batch) {
    const ModalityMask m = Available(*s, mask);
    if (!m.use_visual && !m.use_audio) {
      Fail(ErrorKind::kInvalidInput, fmt::format("train step: sample {} has no data for mask {}", s->id, mask.Name()));
    }
    ForwardTape tape;
    const ForwardOutput out = model.Forward(MakeModelInput(*s, ctx.audio_norm), m, tape);
    Vector6d dh = Vector6d::Zero();
    Eigen::Vector3d dg = Eigen::Vector3d::Zero();
    if (cfg.use_headpose_loss) {
      const Vector6d target = NormalizeHeadpose(s->headpose, ctx.label_norm);
      sum_hp += HeadposeLoss(out.headpose, target);
      dh = (w_hp * inv_b) * HeadposeLossGradient(out.headpose, target);
    }
    if (cfg.use_gaze_loss) {
      sum_pg += GazeLoss(out.gaze, s->gaze);
      dg = (w_pg * inv_b) * GazeLossGradient(out.gaze, s->gaze);
    }
    model.Backward(tape, dh, dg);
  }
  StepLosses losses;
  losses.mask = mask;
  if (cfg.use_headpose_loss) losses.l_hp = sum_hp * inv_b;
  if (cfg.use_gaze_loss) losses.l_pg = sum_pg * inv_b;
  losses.l_total = w_hp * losses.l_hp.value_or(0.0) + w_pg * losses.l_pg.value_or(0.0);
  return losses;
}

StepLosses TrainStep(AvModel& model, nn::Adam& optimizer, std::span<const Sample* const> batch,
                     const TrainConfig& cfg, const TrainContext& ctx, std::mt19937_64& rng, long step) {
  const ModalityMask mask = cfg.fixed_mask ? *cfg.fixed_mask : SampleModalityMask(rng, cfg.modality_drop_prob);
  StepLosses losses = ComputeBatchGradients(model, batch, mask, cfg, ctx);
  losses.grad_norm = nn::ClipGradNorm(model.params(), cfg.grad_clip_norm);
  if (!std::isfinite(losses.l_total) || !std::isfinite(losses.grad_norm)) {
    std::string ids;
    for (const Sample* s : batch) ids += (ids.empty() ? "" : ",") + s->id;
    Fail(ErrorKind::kNonFinite, fmt::format("train step {}: non-finite loss {} (grad norm {}) with mask {} on batch [{}]",
                                            step, losses.l_total, losses.grad_norm, mask.Name(), ids));
  }
  optimizer.Step(model.params(), cfg.learning_rate);
  return losses;
}

double MeanGazeError(const AvModel& model, std::span<const Sample> samples, const NormStats& audio_norm,
                     const ModalityMask& mask) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : samples) {
    const ModalityMask m = Available(s, mask);
    if (!m.use_visual && !m.use_audio) continue;
    const ForwardOutput out = model.Forward(MakeModelInput(s, audio_norm), m);
    sum += AngularErrorDeg(out.gaze, s.gt_gaze.value_or(s.gaze));
    ++n;
  }
  Require(n > 0, ErrorKind::kInsufficientData, "gaze error: no sample carries the requested modality");
  return sum / n;
}

TrainResult Train(const ModelConfig& model_config, const TrainConfig& cfg, std::span<const Sample> samples,
                  const TrainOptions& options) {
  cfg.Validate();
  model_config.Validate();
  std::vector<const Sample*> train;
  std::vector<Sample> val;
  for (const auto& s : samples) {
    if (s.split == Split::kTrain) {
      train.push_back(&s);
    } else {
      val.push_back(s);
    }
  }
  Require(!train.empty(), ErrorKind::kConfig, "train: zero eligible training chunks");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  TrainContext ctx;
  std::mt19937_64 rng(cfg.seed ^ kTrainRngSalt);
  int start_epoch = 0;
  long step = 0;

  if (options.resume_from) {
    ck = LoadCheckpoint(*options.resume_from, model_config);
    Require(ck.train.has_value(), ErrorKind::kValidation,
            options.resume_from->string() + ": checkpoint carries no training state");
    Require(ck.train_config == cfg.Canonical(), ErrorKind::kValidation,
            options.resume_from->string() + ": checkpoint was produced by a different training config");
    std::istringstream is(ck.train->rng_state);
    is >> rng;
    Require(!is.fail(), ErrorKind::kParse, "train: corrupt RNG state in checkpoint");
    start_epoch = ck.train->epoch;
    step = ck.train->step;
    ctx.audio_norm = ck.audio_norm;
    ctx.label_norm = ck.label_norm;
  } else {
    ck.model = AvModel::Create(model_config, cfg.seed);
    ck.fbank = options.fbank;
    ck.seed = cfg.seed;
    ck.train_config = cfg.Canonical();
    const bool any_audio = std::ranges::any_of(train, [](const Sample* s) { return s->has_audio(); });
    if (any_audio) {
      ctx.audio_norm = FitAudioNorm(samples);
    } else {
      ctx.audio_norm.mean = Eigen::VectorXd::Zero(model_config.audio_input_dim);
      ctx.audio_norm.std = Eigen::VectorXd::Ones(model_config.audio_input_dim);
    }
    if (options.label_norm) {
      ctx.label_norm = *options.label_norm;
    } else {
      std::vector<Vector6d> poses;
      for (const Sample* s : train) poses.push_back(s->headpose);
      ctx.label_norm = poses.size() >= 2 ? FitLabelNorm(poses) : LabelNormStats{};
    }
    ck.audio_norm = ctx.audio_norm;
    ck.label_norm = ctx.label_norm;
    ck.train = TrainState{0, 0, RngText(rng), nn::Adam(ck.model.params())};
  }
  AvModel& model = ck.model;
  nn::Adam& adam = ck.train->optimizer;

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    const auto log_path = options.out_dir / "train_log.jsonl";
    const auto kept = options.resume_from ? KeptLogLines(log_path, step, start_epoch) : std::vector<std::string>{};
    log.open(log_path, std::ios::trunc);
    if (!log) Fail(ErrorKind::kIo, "train: cannot write " + log_path.string());
    for (const auto& line : kept) log << line << '\n';
  }
  const ModalityMask val_mask = cfg.fixed_mask.value_or(ModalityMask::AudioVisual());

  std::vector<std::size_t> order(train.size());
  std::vector<const Sample*> batch;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord er;
    er.epoch = epoch;
    int n_steps = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) batch.push_back(train[order[i]]);
      StepRecord rec{step, epoch, TrainStep(model, adam, batch, cfg, ctx, rng, step)};
      ++er.mask_counts[MaskSlot(rec.losses.mask)];
      er.mean_total += rec.losses.l_total;
      ++n_steps;
      if (log.is_open()) log << StepJson(rec).dump() << '\n';
      if (options.progress && cfg.log_every > 0 && step % cfg.log_every == 0) {
        *options.progress << fmt::format("epoch {} step {} l_total {:.6f} mask {}\n", epoch, step,
                                         rec.losses.l_total, rec.losses.mask.Name());
      }
      result.steps.push_back(rec);
      ++step;
    }
    er.mean_total /= std::max(n_steps, 1);
    if (!val.empty()) {
      er.val_gaze_deg = MeanGazeError(model, val, ctx.audio_norm, val_mask);
      er.val_headpose_mse = HeadposeMse(model, val, ctx, val_mask);
    }
    if (log.is_open()) log << EpochJson(er).dump() << '\n';
    if (options.progress) {
      *options.progress << fmt::format("epoch {} done: mean l_total {:.6f}", epoch, er.mean_total);
      if (er.val_gaze_deg) *options.progress << fmt::format(", val gaze {:.3f} deg", *er.val_gaze_deg);
      *options.progress << '\n';
    }
    result.epochs.push_back(er);

    ck.train->epoch = epoch + 1;
    ck.train->step = step;
    ck.train->rng_state = RngText(rng);
    if (!options.out_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      SaveCheckpoint(options.out_dir / "checkpoints" / fmt::format("epoch_{:04d}.ckpt", epoch + 1), ck);
    }
  }
  model.params().ZeroGrad();
  if (!options.out_dir.empty()) SaveCheckpoint(options.out_dir / "checkpoint.ckpt", ck);
  return result;
}

}  // namespace avattn
