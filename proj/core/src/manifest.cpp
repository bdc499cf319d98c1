// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <set>

#include <json.hpp>

#include "avattn/data.hpp"
#include "avattn/error.hpp"

namespace avattn {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kManifestSchema = "avattn-manifest";
constexpr const char* kChunkSchema = "avattn-chunks";

template <int N>
Eigen::Matrix<double, N, 1> VecFrom(const json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw std::invalid_argument(fmt::format("{} must be an array of {} numbers", what, N));
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw std::invalid_argument(fmt::format("{} must hold numbers", what));
    v[i] = j[i].get<double>();
    if (!std::isfinite(v[i])) throw std::invalid_argument(fmt::format("{} must be finite", what));
  }
  return v;
}

template <typename Derived>
json VecTo(const Eigen::MatrixBase<Derived>& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

std::optional<TaskLabel> TaskLabelFrom(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_object()) throw std::invalid_argument("task_label entries must be objects or null");
  TaskLabel t;
  if (j.contains("zone")) {
    const int z = j["zone"].get<int>();
    if (z < 1 || z > 9) throw std::invalid_argument(fmt::format("zone {} outside 1..9", z));
    t.zone = z;
  }
  if (j.contains("pitch") || j.contains("yaw")) {
    t.gaze = PitchYaw{j.at("pitch").get<double>(), j.at("yaw").get<double>()};
  }
  return t;
}

ordered_json TaskLabelTo(const std::optional<TaskLabel>& t) {
  if (!t) return nullptr;
  ordered_json j = ordered_json::object();
  if (t->zone) j["zone"] = *t->zone;
  if (t->gaze) {
    j["pitch"] = t->gaze->pitch;
    j["yaw"] = t->gaze->yaw;
  }
  return j;
}

ManifestEntry EntryFrom(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw std::invalid_argument("entry must be a JSON object");
  if (j.value("schema", std::string(kManifestSchema)) != kManifestSchema) {
    throw std::invalid_argument("unknown schema");
  }
  if (j.value("version", kManifestVersion) != kManifestVersion) {
    throw std::invalid_argument(fmt::format("unsupported manifest version {}", j["version"].dump()));
  }
  ManifestEntry e;
  e.clip_id = j.at("clip_id").get<std::string>();
  if (e.clip_id.empty()) throw std::invalid_argument("clip_id must be non-empty");
  for (const auto& f : j.at("frames")) e.frame_paths.push_back(base / f.get<std::string>());
  e.audio_path = base / j.at("audio").get<std::string>();
  e.fps = j.at("fps").get<double>();
  if (!(e.fps > 0.0)) throw std::invalid_argument("fps must be positive");
  e.sample_rate = j.value("sample_rate", 0);

  const auto& offsets = j.at("audio_offsets");
  if (offsets.size() != e.frame_paths.size()) {
    throw std::invalid_argument("audio_offsets must have one [start, end] pair per frame");
  }
  long prev_start = -1;
  for (const auto& o : offsets) {
    const long s = o.at(0).get<long>();
    const long t = o.at(1).get<long>();
    if (s < 0 || t <= s) throw std::invalid_argument("audio offset pairs need 0 <= start < end");
    if (s <= prev_start) throw std::invalid_argument("audio offsets must increase monotonically");
    prev_start = s;
    e.audio_offsets.emplace_back(s, t);
  }

  const auto per_frame = [&](const char* key) -> const json* {
    if (!j.contains(key) || j[key].is_null()) return nullptr;
    if (!j[key].is_array() || j[key].size() != e.frame_paths.size()) {
      throw std::invalid_argument(fmt::format("{} must hold one item per frame", key));
    }
    return &j[key];
  };
  if (const json* hp = per_frame("pseudo_headpose")) {
    for (const auto& h : *hp) {
      if (h.is_null()) {
        e.pseudo_headpose.emplace_back();
      } else {
        e.pseudo_headpose.push_back(HeadPose6D::FromVector(VecFrom<6>(h, "pseudo_headpose item")));
      }
    }
  }
  if (const json* gz = per_frame("pseudo_gaze")) {
    for (const auto& g : *gz) {
      if (g.is_null()) {
        e.pseudo_gaze.emplace_back();
      } else {
        e.pseudo_gaze.push_back(GazeVector{VecFrom<3>(g, "pseudo_gaze item")});
      }
    }
  }
  if (const json* tl = per_frame("task_label")) {
    for (const auto& t : *tl) e.task_labels.push_back(TaskLabelFrom(t));
  }
  return e;
}

}  // namespace

Manifest LoadManifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, fmt::format("manifest: cannot open {}", path.string()));
  Manifest m;
  m.path = path;
  const std::filesystem::path base = path.parent_path();
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& err) {
      Fail(ErrorKind::kParse, fmt::format("{}:{}: {}", path.string(), line_no, err.what()));
    }
    ManifestEntry e;
    try {
      e = EntryFrom(j, base);
    } catch (const std::exception& err) {
      const std::string id = j.is_object() && j.contains("clip_id") && j["clip_id"].is_string()
                                 ? j["clip_id"].get<std::string>()
                                 : std::string();
      m.issues.push_back({line_no, id, err.what()});
      continue;
    }
    if (!seen.insert(e.clip_id).second) {
      m.issues.push_back({line_no, e.clip_id, fmt::format("duplicate clip_id '{}'", e.clip_id)});
      continue;
    }
    if (options.check_files) {
      std::vector<std::string> missing;
      if (!std::filesystem::exists(e.audio_path)) missing.push_back(e.audio_path.string());
      for (const auto& f : e.frame_paths) {
        if (!std::filesystem::exists(f)) missing.push_back(f.string());
      }
      if (!missing.empty()) {
        m.issues.push_back({line_no, e.clip_id,
                            fmt::format("{} referenced file(s) missing, first: {}", missing.size(),
                                        missing.front())});
        continue;
      }
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void WriteManifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, fmt::format("manifest: cannot write {}", path.string()));
  const std::filesystem::path base = std::filesystem::absolute(path).parent_path();
  const auto rel = [&](const std::filesystem::path& p) {
    return std::filesystem::absolute(p).lexically_relative(base).generic_string();
  };
  for (const auto& e : entries) {
    ordered_json j;
    j["schema"] = kManifestSchema;
    j["version"] = kManifestVersion;
    j["clip_id"] = e.clip_id;
    j["fps"] = e.fps;
    if (e.sample_rate > 0) j["sample_rate"] = e.sample_rate;
    j["audio"] = rel(e.audio_path);
    j["frames"] = ordered_json::array();
    for (const auto& f : e.frame_paths) j["frames"].push_back(rel(f));
    j["audio_offsets"] = ordered_json::array();
    for (const auto& [s, t] : e.audio_offsets) j["audio_offsets"].push_back({s, t});
    if (!e.pseudo_headpose.empty()) {
      j["pseudo_headpose"] = ordered_json::array();
      for (const auto& h : e.pseudo_headpose) {
        j["pseudo_headpose"].push_back(h ? ordered_json(VecTo(h->AsVector())) : ordered_json());
      }
    }
    if (!e.pseudo_gaze.empty()) {
      j["pseudo_gaze"] = ordered_json::array();
      for (const auto& g : e.pseudo_gaze) {
        j["pseudo_gaze"].push_back(g ? ordered_json(VecTo(g->direction)) : ordered_json());
      }
    }
    if (!e.task_labels.empty()) {
      j["task_label"] = ordered_json::array();
      for (const auto& t : e.task_labels) j["task_label"].push_back(TaskLabelTo(t));
    }
    out << j.dump() << '\n';
  }
}

LabelNormStats FitLabelNorm(std::span<const Vector6d> poses) {
  if (poses.size() < 2) {
    Fail(ErrorKind::kInsufficientData,
         fmt::format("label norm: need at least 2 labelled frames, got {}", poses.size()));
  }
  const Vector6d shift = poses.front();
  Vector6d sum = Vector6d::Zero();
  for (const auto& p : poses) sum += p - shift;
  LabelNormStats s;
  s.mean = shift + sum / static_cast<double>(poses.size());
  Vector6d sq = Vector6d::Zero();
  for (const auto& p : poses) sq += (p - s.mean).array().square().matrix();
  s.std = (sq / static_cast<double>(poses.size())).array().sqrt().max(kLabelStdFloor).matrix();
  return s;
}

LabelNormStats FitLabelNorm(std::span<const ManifestEntry> entries) {
  std::vector<Vector6d> poses;
  for (const auto& e : entries) {
    for (const auto& h : e.pseudo_headpose) {
      if (h) poses.push_back(h->AsVector());
    }
  }
  return FitLabelNorm(std::span<const Vector6d>(poses));
}

Vector6d NormalizeHeadpose(const Vector6d& pose, const LabelNormStats& stats) {
  return ((pose - stats.mean).array() / stats.std.array()).matrix();
}

Vector6d DenormalizeHeadpose(const Vector6d& normalized, const LabelNormStats& stats) {
  return (normalized.array() * stats.std.array()).matrix() + stats.mean;
}

void WriteChunkList(const std::filesystem::path& path, std::span<const ChunkRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, fmt::format("chunk list: cannot write {}", path.string()));
  for (const auto& r : records) {
    ordered_json j;
    j["schema"] = kChunkSchema;
    j["version"] = 1;
    j["clip_id"] = r.chunk.span.clip_id;
    j["start"] = r.chunk.span.start;
    j["length"] = r.chunk.span.length;
    j["split"] = r.split == Split::kTrain ? "train" : "test";
    j["center_headpose"] = VecTo(r.chunk.center_headpose.AsVector());
    j["center_gaze"] = VecTo(r.chunk.center_gaze.direction);
    j["gaze_source"] = r.chunk.gaze_from_headpose ? "headpose" : "pseudo";
    j["task_label"] = TaskLabelTo(r.chunk.task_label);
    out << j.dump() << '\n';
  }
}

std::vector<ChunkRecord> ReadChunkList(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kMissingArtifact, fmt::format("chunk list: cannot open {}", path.string()));
  std::vector<ChunkRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ChunkRecord r;
      r.chunk.span.clip_id = j.at("clip_id").get<std::string>();
      r.chunk.span.start = j.at("start").get<int>();
      r.chunk.span.length = j.at("length").get<int>();
      r.split = j.at("split").get<std::string>() == "test" ? Split::kTest : Split::kTrain;
      r.chunk.center_headpose = HeadPose6D::FromVector(VecFrom<6>(j.at("center_headpose"), "center_headpose"));
      r.chunk.center_gaze.direction = VecFrom<3>(j.at("center_gaze"), "center_gaze");
      r.chunk.gaze_from_headpose = j.value("gaze_source", std::string("pseudo")) == "headpose";
      r.chunk.task_label = TaskLabelFrom(j.value("task_label", json()));
      out.push_back(std::move(r));
    } catch (const std::exception& err) {
      Fail(ErrorKind::kParse, fmt::format("{}:{}: {}", path.string(), line_no, err.what()));
    }
  }
  return out;
}

void WriteLabelNorm(const std::filesystem::path& path, const LabelNormStats& stats) {
  ordered_json j;
  j["mean"] = VecTo(stats.mean);
  j["std"] = VecTo(stats.std);
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, fmt::format("label norm: cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

LabelNormStats ReadLabelNorm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kMissingArtifact, fmt::format("label norm: cannot open {}", path.string()));
  try {
    const json j = json::parse(in);
    return {VecFrom<6>(j.at("mean"), "mean"), VecFrom<6>(j.at("std"), "std")};
  } catch (const std::exception& err) {
    Fail(ErrorKind::kParse, fmt::format("{}: {}", path.string(), err.what()));
  }
}

std::vector<Split> AssignClipSplits(std::size_t n_clips, double test_fraction) {
  Require(test_fraction >= 0.0 && test_fraction < 1.0, ErrorKind::kConfig,
          "split: test fraction must lie in [0, 1)");
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n_clips)));
  std::vector<Split> out(n_clips, Split::kTrain);
  for (std::size_t i = n_clips - std::min(n_test, n_clips); i < n_clips; ++i) out[i] = Split::kTest;
  return out;
}

}  // namespace avattn
