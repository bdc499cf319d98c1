// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "avattn/audio_io.hpp"
#include "avattn/checkpoint.hpp"
#include "avattn/data.hpp"
#include "avattn/dataset.hpp"
#include "avattn/error.hpp"
#include "avattn/evaluation.hpp"
#include "avattn/hash.hpp"
#include "avattn/synthworld.hpp"
#include "avattn/training.hpp"

namespace avattn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

/// Every resolved option; each subcommand registers the subset it uses.
struct Options {
  std::uint64_t seed = 0;
  std::string out;
  std::string modality = "av";
  bool force = false;

  // synth
  int clips = 10;
  int frames = 14;
  int image_size = 64;
  double walk = 0.02;
  double eye_offset = 0.1;
  double label_noise = 0.0;
  double audio_noise = 0.01;

  // data
  std::string manifest;
  std::string labels;
  std::string chunks;
  std::string checkpoint;
  std::string resume;
  double test_fraction = 0.2;
  double std_threshold = 0.1;

  // model
  std::string depth = "small";
  int resolution = 64;

  // training
  int epochs = 10;
  int batch = 16;
  double lr = 1e-4;
  double drop = 0.2;
  double w_hp = 1.0;
  double w_pg = 1.0;
  double clip_norm = 5.0;
  int checkpoint_every = 1;
  int log_every = 10;

  // probe / knn
  std::string task = "gaze";
  int probe_epochs = 100;
  double probe_lr = 1e-2;
  int probe_batch = 32;
  int k = 20;
  double temperature = 0.07;
};

void WriteJson(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string FileSha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return Sha256Hex(ss.str());
}

/// Creates `dir`; an existing non-empty directory is cleared only with --force.
void PrepareOutDir(const fs::path& dir, bool force, bool keep = false) {
  Require(!dir.empty(), ErrorKind::kConfig, "--out is required");
  if (fs::exists(dir) && !fs::is_empty(dir) && !keep) {
    Require(force, ErrorKind::kConfig,
            fmt::format("output directory {} is not empty; pass --force to overwrite it", dir.string()));
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

fs::path RequireArtifact(const std::string& path, const std::string& what, const std::string& producer) {
  if (path.empty() || !fs::exists(path)) {
    Fail(ErrorKind::kMissingArtifact,
         fmt::format("missing {}{}; run `avattn {}` first", what, path.empty() ? "" : " at " + path, producer));
  }
  return path;
}

ModelConfig MakeModelConfig(const Options& o, const FilterbankConfig& fbank) {
  ModelConfig cfg;
  Require(o.depth == "small" || o.depth == "full", ErrorKind::kConfig, "--depth must be small or full");
  cfg.depth = o.depth == "full" ? BackboneDepth::kFull : BackboneDepth::kSmall;
  cfg.input_resolution = o.resolution;
  cfg.audio_input_dim = fbank.n_filters;
  return cfg;
}

TrainConfig MakeTrainConfig(const Options& o) {
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.modality_drop_prob = o.drop;
  cfg.loss_weights = {o.w_hp, o.w_pg};
  cfg.grad_clip_norm = o.clip_norm;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.log_every = o.log_every;
  if (o.modality != "av") cfg.fixed_mask = ModalityMask::Parse(o.modality);
  return cfg;
}

ordered_json TrainConfigJson(const Options& o) {
  return {{"epochs", o.epochs},     {"batch", o.batch},       {"lr", o.lr},
          {"drop", o.drop},         {"w_hp", o.w_hp},         {"w_pg", o.w_pg},
          {"clip_norm", o.clip_norm}, {"checkpoint_every", o.checkpoint_every}};
}

ordered_json DataJson(const Options& o) {
  return {{"manifest", o.manifest}, {"chunks", o.chunks}, {"depth", o.depth}, {"resolution", o.resolution}};
}

void WriteRunConfig(const fs::path& dir, const std::string& command, const Options& o, ordered_json options) {
  options["seed"] = o.seed;
  options["out"] = o.out;
  options["modality"] = o.modality;
  ordered_json j;
  j["command"] = command;
  j["version"] = VersionId();
  j["options"] = std::move(options);
  WriteJson(dir / "run_config.json", j);
}

ordered_json Optional(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json MetricsJson(const GazeMetrics& m) {
  return {{"all", m.all},
          {"front_180", Optional(m.front_180)},
          {"front_facing", Optional(m.front_facing)},
          {"n_all", m.n_all},
          {"n_front_180", m.n_front_180},
          {"n_front_facing", m.n_front_facing}};
}

std::string FormatOptional(const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : "absent"; }

struct LoadedData {
  Manifest manifest;
  std::vector<ChunkRecord> records;
  LabelNormStats label_norm;
  std::vector<Sample> samples;
  FilterbankConfig fbank;
};

LoadedData LoadData(const Options& o) {
  LoadedData d;
  d.manifest = LoadManifest(RequireArtifact(o.manifest, "manifest", "synth"));
  const fs::path chunk_dir = o.chunks;
  const fs::path list = RequireArtifact(o.chunks.empty() ? "" : (chunk_dir / "chunks.jsonl").string(), "chunk list",
                                        "chunks");
  d.records = ReadChunkList(list);
  d.label_norm = ReadLabelNorm(RequireArtifact((chunk_dir / "label_norm.json").string(), "label norm", "chunks"));
  d.samples = LoadSamples(d.manifest.entries, d.records, {o.resolution, d.fbank});
  return d;
}

Checkpoint LoadRequiredCheckpoint(const Options& o) {
  return LoadCheckpoint(RequireArtifact(o.checkpoint, "checkpoint", "train"));
}

// --- commands --------------------------------------------------------------

int CmdSynth(const Options& o, std::ostream& out) {
  const fs::path dir = o.out;
  PrepareOutDir(dir, o.force);
  WorldConfig cfg;
  cfg.seed = o.seed;
  cfg.n_clips = o.clips;
  cfg.frames_per_clip = o.frames;
  cfg.image_size = o.image_size;
  cfg.pose_walk_scale = o.walk;
  cfg.eye_offset_scale = o.eye_offset;
  cfg.audio_noise = o.audio_noise;
  const World world = GenerateWorld(cfg);
  const fs::path manifest = WriteWorld(world, dir, o.label_noise);
  WriteRunConfig(dir, "synth", o,
                 {{"clips", o.clips},
                  {"frames", o.frames},
                  {"image_size", o.image_size},
                  {"walk", o.walk},
                  {"eye_offset", o.eye_offset},
                  {"label_noise", o.label_noise},
                  {"audio_noise", o.audio_noise}});
  WriteJson(dir / "summary.json", {{"command", "synth"},
                                   {"version", VersionId()},
                                   {"manifest", manifest.string()},
                                   {"clips", o.clips},
                                   {"frames_per_clip", o.frames},
                                   {"manifest_sha256", FileSha256(manifest)}});
  out << manifest.string() << '\n';
  return 0;
}

int CmdFeatures(const Options& o, std::ostream& out) {
  const Manifest manifest = LoadManifest(RequireArtifact(o.manifest, "manifest", "synth"));
  const fs::path dir = o.out;
  PrepareOutDir(dir, o.force);
  const FilterbankConfig fbank;
  long frames = 0;
  ordered_json files = ordered_json::array();
  std::string hash;
  for (const auto& e : manifest.entries) {
    const AudioClip audio = ReadWav(e.audio_path);
    const FilterbankFeatures feats = ExtractFeatures(audio, fbank);
    hash = ConfigHash(fbank, audio.sample_rate);
    const fs::path path = dir / (e.clip_id + ".fbank");
    WriteFeatureFile(path, feats, {audio.sample_rate, hash});
    frames += feats.num_frames();
    files.push_back({{"clip_id", e.clip_id}, {"frames", feats.num_frames()}, {"sha256", FileSha256(path)}});
  }
  WriteRunConfig(dir, "features", o, {{"manifest", o.manifest}});
  WriteJson(dir / "summary.json", {{"command", "features"},
                                   {"version", VersionId()},
                                   {"clips", manifest.entries.size()},
                                   {"rejected_manifest_lines", manifest.issues.size()},
                                   {"frames", frames},
                                   {"config_hash", hash},
                                   {"files", files}});
  out << fmt::format("wrote features for {} clips ({} frames) to {}\n", manifest.entries.size(), frames, dir.string());
  return 0;
}

int CmdChunks(const Options& o, std::ostream& out, std::ostream& err) {
  Manifest manifest = LoadManifest(RequireArtifact(o.manifest, "manifest", "synth"));
  for (const auto& issue : manifest.issues) {
    err << fmt::format("warning: manifest line {} ({}) rejected: {}\n", issue.line, issue.clip_id, issue.message);
  }
  const std::string labels =
      o.labels.empty() ? (fs::path(o.manifest).parent_path() / "pseudo_labels.csv").string() : o.labels;
  const CsvLabelProvider provider = CsvLabelProvider::Load(RequireArtifact(labels, "pseudo-label CSV", "synth"));
  for (auto& e : manifest.entries) FillPseudoLabels(e, provider);

  const fs::path dir = o.out;
  PrepareOutDir(dir, o.force);
  const LabelNormStats norm = FitLabelNorm(std::span<const ManifestEntry>(manifest.entries));
  const std::vector<Split> splits = AssignClipSplits(manifest.entries.size(), o.test_fraction);
  ChunkOptions copt;
  copt.std_threshold = o.std_threshold;
  std::vector<ChunkRecord> records;
  std::vector<std::string> warnings;
  long windows = 0;
  long dropped = 0;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    windows += static_cast<long>(e.num_frames()) / copt.chunk_len;
    for (const ChunkSpan& span : SelectChunks(e, norm, copt, &warnings)) {
      if (auto labeled = AttachPseudoLabels(e, span, provider, provider)) {
        records.push_back({*labeled, splits[i]});
      } else {
        ++dropped;
      }
    }
  }
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  WriteChunkList(dir / "chunks.jsonl", records);
  WriteLabelNorm(dir / "label_norm.json", norm);
  const auto n_test = std::ranges::count_if(records, [](const ChunkRecord& r) { return r.split == Split::kTest; });
  WriteRunConfig(dir, "chunks", o,
                 {{"manifest", o.manifest},
                  {"labels", labels},
                  {"test_fraction", o.test_fraction},
                  {"std_threshold", o.std_threshold}});
  WriteJson(dir / "summary.json", {{"command", "chunks"},
                                   {"version", VersionId()},
                                   {"clips", manifest.entries.size()},
                                   {"candidate_windows", windows},
                                   {"chunks", records.size()},
                                   {"dropped_unlabelled", dropped},
                                   {"train_chunks", static_cast<long>(records.size()) - n_test},
                                   {"test_chunks", n_test},
                                   {"warnings", warnings}});
  out << fmt::format("selected {} of {} windows ({} test) into {}\n", records.size(), windows, n_test, dir.string());
  return 0;
}

int CmdTrain(const Options& o, std::ostream& out) {
  const LoadedData data = LoadData(o);
  const fs::path dir = o.out;
  PrepareOutDir(dir, o.force, !o.resume.empty());
  const ModelConfig mcfg = MakeModelConfig(o, data.fbank);
  const TrainConfig tcfg = MakeTrainConfig(o);
  TrainOptions topt;
  topt.out_dir = dir;
  topt.progress = &out;
  topt.fbank = data.fbank;
  topt.label_norm = data.label_norm;
  if (!o.resume.empty()) topt.resume_from = RequireArtifact(o.resume, "checkpoint to resume", "train");
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = Train(mcfg, tcfg, data.samples, topt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ordered_json run = DataJson(o);
  run.update(TrainConfigJson(o));
  run["resume"] = o.resume;
  WriteRunConfig(dir, "train", o, run);
  ordered_json summary{{"command", "train"},
                       {"version", VersionId()},
                       {"checkpoint", (dir / "checkpoint.ckpt").string()},
                       {"checkpoint_sha256", FileSha256(dir / "checkpoint.ckpt")},
                       {"backbone_hash", result.checkpoint.model.BackboneHash()},
                       {"model_config_hash", mcfg.Hash()},
                       {"train_chunks", std::ranges::count_if(data.samples, [](const Sample& s) {
                          return s.split == Split::kTrain;
                        })},
                       {"epochs_completed", result.checkpoint.train->epoch},
                       {"steps", result.checkpoint.train->step}};
  if (!result.epochs.empty()) {
    const EpochRecord& last = result.epochs.back();
    summary["final_mean_total"] = last.mean_total;
    summary["final_val_gaze_deg"] = Optional(last.val_gaze_deg);
    summary["final_val_headpose_mse"] = Optional(last.val_headpose_mse);
  }
  WriteJson(dir / "summary.json", summary);
  out << fmt::format("trained {} epochs in {:.1f} s; checkpoint {}\n", result.checkpoint.train->epoch, secs,
                     (dir / "checkpoint.ckpt").string());
  return 0;
}

struct FrozenSets {
  EmbeddingSet train;
  EmbeddingSet test;
  std::string hash_before;
  std::size_t skipped = 0;
};

FrozenSets Embed(const Checkpoint& ck, const LoadedData& data, const ModalityMask& mask) {
  FrozenSets s;
  s.hash_before = ck.model.BackboneHash();
  ExtractionReport r1;
  ExtractionReport r2;
  s.train = ExtractEmbeddings(ck.model, SelectSplit(data.samples, Split::kTrain), ck.audio_norm, mask, &r1);
  s.test = ExtractEmbeddings(ck.model, SelectSplit(data.samples, Split::kTest), ck.audio_norm, mask, &r2);
  s.skipped = r1.skipped.size() + r2.skipped.size();
  return s;
}

int CmdProbe(const Options& o, std::ostream& out) {
  const Checkpoint ck = LoadRequiredCheckpoint(o);
  const LoadedData data = LoadData(o);
  const fs::path dir = o.out;
  PrepareOutDir(dir, o.force);
  const ModalityMask mask = ModalityMask::Parse(o.modality);
  const ProbeTask task = ParseProbeTask(o.task);
  const FrozenSets sets = Embed(ck, data, mask);
  ProbeOptions popt;
  popt.epochs = o.probe_epochs;
  popt.learning_rate = o.probe_lr;
  popt.batch_size = o.probe_batch;
  popt.seed = o.seed;
  const ProbeResult probe = LinearProbe(sets.train, sets.test, task, popt);
  const std::string hash_after = ck.model.BackboneHash();
  Require(hash_after == sets.hash_before, ErrorKind::kValidation, "probe modified the frozen backbone");

  const char* metric_name = task == ProbeTask::kGaze ? "mean_angular_error_deg"
                            : task == ProbeTask::kHeadpose ? "mse"
                                                           : "accuracy_percent";
  ordered_json run = DataJson(o);
  run.update({{"checkpoint", o.checkpoint},
              {"task", o.task},
              {"probe_epochs", o.probe_epochs},
              {"probe_lr", o.probe_lr},
              {"probe_batch", o.probe_batch}});
  WriteRunConfig(dir, "probe", o, run);
  WriteJson(dir / "summary.json", {{"command", "probe"},
                                   {"version", VersionId()},
                                   {"task", std::string(ToString(task))},
                                   {"modality", mask.Name()},
                                   {metric_name, probe.metric},
                                   {"n_train", sets.train.size()},
                                   {"n_test", probe.test_ids.size()},
                                   {"skipped", sets.skipped},
                                   {"backbone_hash_before", sets.hash_before},
                                   {"backbone_hash_after", hash_after}});
  out << fmt::format("probe {} ({}): {} = {:.4f}\n", ToString(task), mask.Name(), metric_name, probe.metric);
  return 0;
}

int CmdKnn(const Options& o, std::ostream& out) {
  const Checkpoint ck = LoadRequiredCheckpoint(o);
  const LoadedData data = LoadData(o);
  const fs::path dir = o.out;
  PrepareOutDir(dir, o.force);
  const ModalityMask mask = ModalityMask::Parse(o.modality);
  const FrozenSets sets = Embed(ck, data, mask);
  KnnOptions kopt;
  kopt.k = o.k;
  kopt.temperature = o.temperature;
  const KnnResult knn = WeightedKnn(sets.train, sets.test, kopt);
  const std::string hash_after = ck.model.BackboneHash();
  Require(hash_after == sets.hash_before, ErrorKind::kValidation, "kNN modified the frozen backbone");
  ordered_json run = DataJson(o);
  run.update({{"checkpoint", o.checkpoint}, {"k", o.k}, {"temperature", o.temperature}});
  WriteRunConfig(dir, "knn", o, run);
  WriteJson(dir / "summary.json", {{"command", "knn"},
                                   {"version", VersionId()},
                                   {"modality", mask.Name()},
                                   {"k", o.k},
                                   {"temperature", o.temperature},
                                   {"zone_accuracy_percent", knn.accuracy},
                                   {"n_test", knn.predictions.size()},
                                   {"backbone_hash_before", sets.hash_before},
                                   {"backbone_hash_after", hash_after}});
  out << fmt::format("weighted kNN ({}): zone accuracy {:.2f}% over {} test chunks\n", mask.Name(), knn.accuracy,
                     knn.predictions.size());
  return 0;
}

int CmdEval(const Options& o, std::ostream& out) {
  const Checkpoint ck = LoadRequiredCheckpoint(o);
  const LoadedData data = LoadData(o);
  const fs::path dir = o.out;
  PrepareOutDir(dir, o.force);
  const ModalityMask mask = ModalityMask::Parse(o.modality);
  const std::vector<Sample> test = SelectSplit(data.samples, Split::kTest);
  std::vector<Eigen::Vector3d> preds;
  std::vector<Eigen::Vector3d> gts;
  std::vector<std::string> ids;
  double hp_mse = 0.0;
  for (const auto& s : test) {
    if ((mask.use_visual && !s.has_visual()) || (mask.use_audio && !s.has_audio())) continue;
    const ForwardOutput f = ck.model.Forward(MakeModelInput(s, ck.audio_norm), mask);
    preds.push_back(f.gaze);
    gts.push_back(s.gt_gaze.value_or(s.gaze));
    ids.push_back(s.id);
    hp_mse += HeadposeLoss(DenormalizeHeadpose(f.headpose, ck.label_norm), s.headpose);
  }
  Require(!preds.empty(), ErrorKind::kInsufficientData, "eval: the test split has no chunk for the requested modality");
  hp_mse /= static_cast<double>(preds.size());
  const GazeMetrics m = ComputeGazeMetrics(preds, gts);

  const std::vector<bool> front = FrontalMask(gts, 90.0);
  const std::vector<bool> facing = FrontalMask(gts, 20.0);
  std::ofstream csv(dir / "predictions.csv", std::ios::trunc);
  csv << "sample_id,pred_x,pred_y,pred_z,gt_x,gt_y,gt_z,error_deg,front_180,front_facing\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    csv << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", ids[i], preds[i].x(),
                       preds[i].y(), preds[i].z(), gts[i].x(), gts[i].y(), gts[i].z(),
                       AngularErrorDeg(preds[i], gts[i]), front[i] ? 1 : 0, facing[i] ? 1 : 0);
  }
  const std::string table = fmt::format(
      "{:<10} {:>12} {:>12} {:>12} {:>14}\n{:<10} {:>12.3f} {:>12} {:>12} {:>14.5f}\n", "modality", "all_360",
      "front_180", "front_face", "headpose_mse", mask.Name(), m.all, FormatOptional(m.front_180),
      FormatOptional(m.front_facing), hp_mse);
  std::ofstream(dir / "metrics.txt", std::ios::trunc) << table;
  ordered_json run = DataJson(o);
  run["checkpoint"] = o.checkpoint;
  WriteRunConfig(dir, "eval", o, run);
  WriteJson(dir / "metrics.json", {{"command", "eval"},
                                   {"version", VersionId()},
                                   {"modality", mask.Name()},
                                   {"gaze_error_deg", MetricsJson(m)},
                                   {"headpose_mse", hp_mse},
                                   {"backbone_hash", ck.model.BackboneHash()}});
  WriteJson(dir / "summary.json", {{"command", "eval"}, {"version", VersionId()}, {"metrics", "metrics.json"}});
  out << table;
  return 0;
}

int CmdAblate(const Options& o, std::ostream& out) {
  const LoadedData data = LoadData(o);
  const fs::path dir = o.out;
  PrepareOutDir(dir, o.force);
  const ModelConfig mcfg = MakeModelConfig(o, data.fbank);
  TrainConfig tcfg = MakeTrainConfig(o);
  tcfg.fixed_mask.reset();
  AblationOptions aopt;
  aopt.out_dir = dir / "cells";
  aopt.progress = &out;
  aopt.fbank = data.fbank;
  aopt.label_norm = data.label_norm;
  aopt.probe.epochs = o.probe_epochs;
  aopt.probe.learning_rate = o.probe_lr;
  aopt.probe.batch_size = o.probe_batch;
  aopt.probe.seed = o.seed;
  const std::vector<AblationRow> rows = RunAblationGrid(mcfg, tcfg, data.samples, aopt);

  ordered_json jrows = ordered_json::array();
  std::string table = fmt::format("{:<12} {:>3} {:>3} {:>5} {:>6} {:>10} {:>10} {:>11}\n", "config", "PG", "HP",
                                  "Audio", "Visual", "all_360", "front_180", "front_face");
  auto mark = [](bool b) { return b ? "x" : "-"; };
  for (const auto& r : rows) {
    ordered_json j{{"name", r.name},
                   {"pseudo_gaze", r.pseudo_gaze},
                   {"headpose", r.headpose},
                   {"audio", r.audio},
                   {"visual", r.visual},
                   {"gaze_error_deg", r.gaze ? MetricsJson(*r.gaze) : ordered_json(nullptr)},
                   {"backbone_hash", r.backbone_hash},
                   {"error", r.error.empty() ? ordered_json(nullptr) : ordered_json(r.error)}};
    jrows.push_back(j);
    table += fmt::format("{:<12} {:>3} {:>3} {:>5} {:>6} {:>10} {:>10} {:>11}\n", r.name, mark(r.pseudo_gaze),
                         mark(r.headpose), mark(r.audio), mark(r.visual),
                         r.gaze ? fmt::format("{:.3f}", r.gaze->all) : "failed",
                         r.gaze ? FormatOptional(r.gaze->front_180) : "-",
                         r.gaze ? FormatOptional(r.gaze->front_facing) : "-");
  }
  std::ofstream(dir / "ablation.txt", std::ios::trunc) << table;
  ordered_json run = DataJson(o);
  run.update(TrainConfigJson(o));
  run.update({{"probe_epochs", o.probe_epochs}, {"probe_lr", o.probe_lr}, {"probe_batch", o.probe_batch}});
  WriteRunConfig(dir, "ablate", o, run);
  WriteJson(dir / "ablation.json", {{"command", "ablate"}, {"version", VersionId()}, {"rows", jrows}});
  const auto failed = std::ranges::count_if(rows, [](const AblationRow& r) { return !r.error.empty(); });
  WriteJson(dir / "summary.json",
            {{"command", "ablate"}, {"version", VersionId()}, {"rows", rows.size()}, {"failed_cells", failed}});
  out << table;
  return failed == 0 ? 0 : 1;
}

// --- option registration ---------------------------------------------------

void AddCommon(CLI::App* cmd, Options& o, bool modality = true) {
  cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory")->required();
  if (modality) {
    cmd->add_option("--modality", o.modality, "Modalities to use")
        ->check(CLI::IsMember({"audio", "visual", "av"}))
        ->capture_default_str();
  }
  cmd->add_flag("--force", o.force, "Overwrite a non-empty output directory");
}

void AddData(CLI::App* cmd, Options& o) {
  cmd->add_option("--manifest", o.manifest, "Clip manifest (JSON lines)");
  cmd->add_option("--chunks", o.chunks, "Directory written by `chunks`");
  cmd->add_option("--depth", o.depth, "Backbone depth")->check(CLI::IsMember({"small", "full"}))->capture_default_str();
  cmd->add_option("--resolution", o.resolution, "Input resolution")->check(CLI::PositiveNumber)->capture_default_str();
}

void AddTraining(CLI::App* cmd, Options& o) {
  cmd->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--batch", o.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--drop", o.drop, "Modality dropout probability per side")
      ->check(CLI::Range(0.0, 0.5))
      ->capture_default_str();
  cmd->add_option("--w-hp", o.w_hp, "Head-pose loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--w-pg", o.w_pg, "Pseudo-gaze loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--clip-norm", o.clip_norm, "Global gradient-norm clip")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--checkpoint-every", o.checkpoint_every, "Epochs between checkpoints (0 disables)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--log-every", o.log_every, "Steps between progress lines")->capture_default_str();
}

void AddProbe(CLI::App* cmd, Options& o) {
  cmd->add_option("--probe-epochs", o.probe_epochs, "Linear-probe epochs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--probe-lr", o.probe_lr, "Linear-probe learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--probe-batch", o.probe_batch, "Linear-probe batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

}  // namespace

std::string VersionId() { return std::string("avattn-") + AVATTN_VERSION; }

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-visual gaze and head-pose pipeline", "avattn"};
  app.set_config("--config", "", "Key-value config file; command-line flags override it");
  app.set_version_flag("--version", VersionId());
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic audio-visual world");
  AddCommon(synth, o, false);
  synth->add_option("--clips", o.clips, "Number of clips")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--frames", o.frames, "Frames per clip")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--image-size", o.image_size, "Frame size in pixels")
      ->check(CLI::Range(8, 1024))
      ->capture_default_str();
  synth->add_option("--walk", o.walk, "Head-pose walk step (rad/frame)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth->add_option("--eye-offset", o.eye_offset, "Eye-offset bound (rad)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth->add_option("--label-noise", o.label_noise, "Pseudo-label noise std")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth->add_option("--audio-noise", o.audio_noise, "Audio noise std")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  auto* features = app.add_subcommand("features", "Extract log-mel filterbank features per clip");
  AddCommon(features, o, false);
  features->add_option("--manifest", o.manifest, "Clip manifest (JSON lines)");

  auto* chunks = app.add_subcommand("chunks", "Select stable 7-frame chunks and attach pseudo labels");
  AddCommon(chunks, o, false);
  chunks->add_option("--manifest", o.manifest, "Clip manifest (JSON lines)");
  chunks->add_option("--labels", o.labels, "Pseudo-label CSV (default: pseudo_labels.csv next to the manifest)");
  chunks->add_option("--test-fraction", o.test_fraction, "Fraction of clips held out")
      ->check(CLI::Range(0.0, 0.99))
      ->capture_default_str();
  chunks->add_option("--std-threshold", o.std_threshold, "Max normalised pose std within a chunk")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "Train the audio-visual model");
  AddCommon(train, o);
  AddData(train, o);
  AddTraining(train, o);
  train->add_option("--resume", o.resume, "Checkpoint to resume from");

  auto* probe = app.add_subcommand("probe", "Linear probe on frozen embeddings");
  AddCommon(probe, o);
  AddData(probe, o);
  AddProbe(probe, o);
  probe->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");
  probe->add_option("--task", o.task, "Probe task")
      ->check(CLI::IsMember({"gaze", "headpose", "zone"}))
      ->capture_default_str();

  auto* knn = app.add_subcommand("knn", "Weighted kNN zone classification on frozen embeddings");
  AddCommon(knn, o);
  AddData(knn, o);
  knn->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");
  knn->add_option("--k", o.k, "Neighbours")->check(CLI::PositiveNumber)->capture_default_str();
  knn->add_option("--temperature", o.temperature, "Similarity temperature")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Gaze and head-pose metrics of the trained heads");
  AddCommon(eval, o);
  AddData(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Trained checkpoint");

  auto* ablate = app.add_subcommand("ablate", "Train and probe the five loss/modality configurations");
  AddCommon(ablate, o, false);
  AddData(ablate, o);
  AddTraining(ablate, o);
  AddProbe(ablate, o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*synth) return CmdSynth(o, out);
    if (*features) return CmdFeatures(o, out);
    if (*chunks) return CmdChunks(o, out, err);
    if (*train) return CmdTrain(o, out);
    if (*probe) return CmdProbe(o, out);
    if (*knn) return CmdKnn(o, out);
    if (*eval) return CmdEval(o, out);
    if (*ablate) return CmdAblate(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}

}  // namespace avattn::cli
