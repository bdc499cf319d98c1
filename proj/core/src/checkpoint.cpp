// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>

#include <json.hpp>

#include "avattn/error.hpp"

namespace avattn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

using nlohmann::json;

constexpr char kMagic[4] = {'A', 'V', 'C', 'K'};

json ToJson(const ModelConfig& c) {
  return {{"visual_feat_dim", c.visual_feat_dim},   {"audio_embed_dim", c.audio_embed_dim},
          {"temporal_hidden", c.temporal_hidden},   {"fused_dim", c.fused_dim},
          {"input_resolution", c.input_resolution}, {"headpose_dim", c.headpose_dim},
          {"gaze_dim", c.gaze_dim},                 {"audio_input_dim", c.audio_input_dim},
          {"chunk_len", c.chunk_len},               {"depth", c.depth == BackboneDepth::kFull ? "full" : "small"},
          {"conv_width", c.conv_width}};
}

ModelConfig ModelConfigFromJson(const json& j) {
  ModelConfig c;
  c.visual_feat_dim = j.at("visual_feat_dim");
  c.audio_embed_dim = j.at("audio_embed_dim");
  c.temporal_hidden = j.at("temporal_hidden");
  c.fused_dim = j.at("fused_dim");
  c.input_resolution = j.at("input_resolution");
  c.headpose_dim = j.at("headpose_dim");
  c.gaze_dim = j.at("gaze_dim");
  c.audio_input_dim = j.at("audio_input_dim");
  c.chunk_len = j.at("chunk_len");
  const std::string depth = j.at("depth");
  Require(depth == "small" || depth == "full", ErrorKind::kParse, "checkpoint: unknown backbone depth " + depth);
  c.depth = depth == "full" ? BackboneDepth::kFull : BackboneDepth::kSmall;
  c.conv_width = j.at("conv_width");
  return c;
}

json ToJson(const FilterbankConfig& c) {
  return {{"pre_emphasis", c.pre_emphasis}, {"window_ms", c.window_ms}, {"overlap_ratio", c.overlap_ratio},
          {"n_filters", c.n_filters},       {"fft_size", c.fft_size},   {"log_floor", c.log_floor},
          {"f_min", c.f_min},               {"f_max", c.f_max}};
}

FilterbankConfig FbankFromJson(const json& j) {
  FilterbankConfig c;
  c.pre_emphasis = j.at("pre_emphasis");
  c.window_ms = j.at("window_ms");
  c.overlap_ratio = j.at("overlap_ratio");
  c.n_filters = j.at("n_filters");
  c.fft_size = j.at("fft_size");
  c.log_floor = j.at("log_floor");
  c.f_min = j.at("f_min");
  c.f_max = j.at("f_max");
  return c;
}

template <typename Vec>
json VecToJson(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd VecFromJson(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

void WriteBlob(std::ofstream& out, const Eigen::MatrixXd& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void ReadBlob(std::ifstream& in, Eigen::MatrixXd& m, const std::string& what) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) Fail(ErrorKind::kParse, "checkpoint: truncated blob for " + what);
}

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto& cfg = ck.model.config();
  json header;
  header["model_config"] = ToJson(cfg);
  header["config_hash"] = cfg.Hash();
  header["fbank"] = ToJson(ck.fbank);
  header["audio_norm"] = {{"mean", VecToJson(ck.audio_norm.mean)}, {"std", VecToJson(ck.audio_norm.std)}};
  header["label_norm"] = {{"mean", VecToJson(ck.label_norm.mean)}, {"std", VecToJson(ck.label_norm.std)}};
  header["seed"] = ck.seed;
  header["train_config"] = ck.train_config;
  json table = json::array();
  for (const auto& p : ck.model.params().params()) {
    table.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  header["parameters"] = table;
  if (ck.train) {
    header["train_state"] = {{"epoch", ck.train->epoch},
                             {"step", ck.train->step},
                             {"rng", ck.train->rng_state},
                             {"adam_step", ck.train->optimizer.step_count()}};
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorKind::kIo, "checkpoint: cannot write " + tmp.string());
    out.write(kMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t size = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&size), sizeof size);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : ck.model.params().params()) WriteBlob(out, p.value);
    if (ck.train) {
      const auto& adam = ck.train->optimizer;
      Require(adam.first_moments().size() == ck.model.params().size(), ErrorKind::kValidation,
              "checkpoint: optimizer state does not match the parameter table");
      for (const auto& m : adam.first_moments()) WriteBlob(out, m);
      for (const auto& v : adam.second_moments()) WriteBlob(out, v);
    }
    if (!out) Fail(ErrorKind::kIo, "checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kMissingArtifact, "checkpoint: cannot open " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&size), sizeof size);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    Fail(ErrorKind::kParse, path.string() + ": not a checkpoint file");
  }
  Require(version == kCheckpointVersion, ErrorKind::kParse,
          fmt::format("{}: unsupported checkpoint version {}", path.string(), version));
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) Fail(ErrorKind::kParse, path.string() + ": truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kParse, fmt::format("{}: bad header: {}", path.string(), e.what()));
  }

  Checkpoint ck;
  try {
    const ModelConfig cfg = ModelConfigFromJson(header.at("model_config"));
    if (cfg.Hash() != header.at("config_hash").get<std::string>()) {
      Fail(ErrorKind::kValidation, path.string() + ": model config hash mismatch");
    }
    ck.model = AvModel::Create(cfg, 0);
    ck.fbank = FbankFromJson(header.at("fbank"));
    ck.audio_norm.mean = VecFromJson(header.at("audio_norm").at("mean"));
    ck.audio_norm.std = VecFromJson(header.at("audio_norm").at("std"));
    const Eigen::VectorXd lm = VecFromJson(header.at("label_norm").at("mean"));
    const Eigen::VectorXd ls = VecFromJson(header.at("label_norm").at("std"));
    Require(lm.size() == 6 && ls.size() == 6, ErrorKind::kParse, path.string() + ": label norm must have 6 entries");
    ck.label_norm.mean = lm;
    ck.label_norm.std = ls;
    ck.seed = header.at("seed");
    ck.train_config = header.value("train_config", "");

    const json& table = header.at("parameters");
    auto& ps = ck.model.params();
    Require(table.size() == ps.size(), ErrorKind::kValidation,
            fmt::format("{}: parameter count {} does not match model ({})", path.string(), table.size(), ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto& p = ps[static_cast<int>(i)];
      if (table[i].at("name") != p.name || table[i].at("rows") != p.value.rows() ||
          table[i].at("cols") != p.value.cols()) {
        Fail(ErrorKind::kValidation, fmt::format("{}: parameter table mismatch at {}", path.string(), p.name));
      }
    }
    for (auto& p : ps.params()) ReadBlob(in, p.value, p.name);

    if (header.contains("train_state")) {
      const json& ts = header.at("train_state");
      TrainState state;
      state.epoch = ts.at("epoch");
      state.step = ts.at("step");
      state.rng_state = ts.at("rng");
      state.optimizer = nn::Adam(ps);
      state.optimizer.set_step_count(ts.at("adam_step"));
      for (auto& m : state.optimizer.first_moments()) ReadBlob(in, m, "adam.m");
      for (auto& v : state.optimizer.second_moments()) ReadBlob(in, v, "adam.v");
      ck.train = std::move(state);
    }
  } catch (const json::exception& e) {
    Fail(ErrorKind::kParse, fmt::format("{}: bad header: {}", path.string(), e.what()));
  }
  return ck;
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = LoadCheckpoint(path);
  Require(ck.model.config().Hash() == expected.Hash(), ErrorKind::kValidation,
          path.string() + ": checkpoint was produced by a different model config");
  return ck;
}

}  // namespace avattn
