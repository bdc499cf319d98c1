// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <sstream>

#include "avattn/data.hpp"
#include "avattn/error.hpp"

namespace avattn {
namespace {

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

}  // namespace

CsvLabelProvider CsvLabelProvider::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, fmt::format("pseudo labels: cannot open {}", path.string()));
  std::map<std::string, std::map<int, Row>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = SplitCsv(line);
    if (line_no == 1 && !cells.empty() && cells[0] == "clip_id") continue;
    if (cells.size() != 8 && cells.size() != 11) {
      Fail(ErrorKind::kParse, fmt::format("{}:{}: expected 8 or 11 columns, got {}", path.string(),
                                          line_no, cells.size()));
    }
    Row row;
    int frame = 0;
    try {
      frame = std::stoi(cells[1]);
      Vector6d v;
      for (int i = 0; i < 6; ++i) v[i] = std::stod(cells[2 + i]);
      row.headpose = HeadPose6D::FromVector(v);
      if (cells.size() == 11) {
        row.gaze = GazeVector{{std::stod(cells[8]), std::stod(cells[9]), std::stod(cells[10])}};
      }
    } catch (const std::exception&) {
      Fail(ErrorKind::kParse, fmt::format("{}:{}: non-numeric field", path.string(), line_no));
    }
    if (frame < 0) Fail(ErrorKind::kParse, fmt::format("{}:{}: negative frame index", path.string(), line_no));
    if (!rows[cells[0]].emplace(frame, row).second) {
      Fail(ErrorKind::kParse, fmt::format("{}:{}: duplicate row for {}#{}", path.string(), line_no, cells[0], frame));
    }
  }
  CsvLabelProvider p;
  for (auto& [clip, frames] : rows) {
    std::vector<std::optional<Row>> dense(frames.rbegin()->first + 1);
    for (auto& [f, r] : frames) dense[f] = r;
    p.clips_.emplace_back(clip, std::move(dense));
  }
  return p;
}

const std::optional<CsvLabelProvider::Row>& CsvLabelProvider::Find(const std::string& clip_id, int frame) const {
  const auto it = std::lower_bound(clips_.begin(), clips_.end(), clip_id,
                                   [](const auto& c, const std::string& id) { return c.first < id; });
  if (it == clips_.end() || it->first != clip_id) {
    Fail(ErrorKind::kLookup, fmt::format("pseudo labels: unknown clip '{}'", clip_id));
  }
  if (frame < 0 || static_cast<std::size_t>(frame) >= it->second.size() || !it->second[frame]) {
    Fail(ErrorKind::kLookup, fmt::format("pseudo labels: no row for {}#{}", clip_id, frame));
  }
  return it->second[frame];
}

std::optional<HeadPose6D> CsvLabelProvider::Headpose(const std::string& clip_id, int frame) const {
  return Find(clip_id, frame)->headpose;
}

std::optional<GazeVector> CsvLabelProvider::Gaze(const std::string& clip_id, int frame) const {
  return Find(clip_id, frame)->gaze;
}

void WritePseudoLabelCsv(const std::filesystem::path& path, std::span<const PseudoLabelRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, fmt::format("pseudo labels: cannot write {}", path.string()));
  out << "clip_id,frame_idx,rx,ry,rz,tx,ty,tz,gx,gy,gz\n";
  for (const auto& r : rows) {
    const Vector6d h = r.headpose.AsVector();
    out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", r.clip_id, r.frame, h[0],
                       h[1], h[2], h[3], h[4], h[5]);
    if (r.gaze) {
      const auto& g = r.gaze->direction;
      out << fmt::format(",{:.17g},{:.17g},{:.17g}", g[0], g[1], g[2]);
    }
    out << '\n';
  }
}

void FillPseudoLabels(ManifestEntry& entry, const PseudoLabelProvider& provider) {
  const std::size_t n = entry.num_frames();
  entry.pseudo_headpose.assign(n, std::nullopt);
  entry.pseudo_gaze.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    try {
      entry.pseudo_headpose[i] = provider.Headpose(entry.clip_id, static_cast<int>(i));
      entry.pseudo_gaze[i] = provider.Gaze(entry.clip_id, static_cast<int>(i));
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::kLookup) throw;
    }
  }
}

}  // namespace avattn
