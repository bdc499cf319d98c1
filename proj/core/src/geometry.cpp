// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numbers>
#include <sstream>

#include "avattn/error.hpp"

namespace avattn {

Vector6d HeadPose6D::AsVector() const {
  Vector6d v;
  v << rotation, translation;
  return v;
}

HeadPose6D HeadPose6D::FromVector(const Vector6d& v) {
  HeadPose6D h;
  h.rotation = v.head<3>();
  h.translation = v.tail<3>();
  return h;
}

double CosineSimilarity(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > kMinNorm) || !(nb > kMinNorm)) {
    Fail(ErrorKind::kDegenerateVector,
         fmt::format("cosine similarity: vector norm below {} ({}, {})", kMinNorm, na, nb));
  }
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double GazeLoss(const Eigen::Vector3d& pred, const Eigen::Vector3d& target) {
  return 1.0 - CosineSimilarity(pred, target);
}

Eigen::Vector3d GazeLossGradient(const Eigen::Vector3d& pred, const Eigen::Vector3d& target) {
  const double cos = CosineSimilarity(pred, target);
  const double np = pred.norm();
  return -(target.normalized() - cos * pred / np) / np;
}

double HeadposeLoss(const Vector6d& pred, const Vector6d& target) {
  return (pred - target).squaredNorm() / 6.0;
}

Vector6d HeadposeLossGradient(const Vector6d& pred, const Vector6d& target) {
  return (pred - target) * (2.0 / 6.0);
}

double TotalLoss(double headpose_loss, double gaze_loss) { return headpose_loss + gaze_loss; }

double TotalLoss(double headpose_loss, double gaze_loss, const LossWeights& weights) {
  return weights.headpose * headpose_loss + weights.gaze * gaze_loss;
}

double AngularErrorDeg(const Eigen::Vector3d& pred, const Eigen::Vector3d& target) {
  return std::acos(CosineSimilarity(pred, target)) * 180.0 / std::numbers::pi;
}

Eigen::Vector3d PitchYawToVector(const PitchYaw& py) {
  const double cp = std::cos(py.pitch);
  return {-cp * std::sin(py.yaw), -std::sin(py.pitch), -cp * std::cos(py.yaw)};
}

PitchYaw VectorToPitchYaw(const Eigen::Vector3d& v) {
  const double n = v.norm();
  Require(n > kMinNorm, ErrorKind::kDegenerateVector, "vector_to_pitchyaw: zero-length vector");
  const Eigen::Vector3d u = v / n;
  PitchYaw py;
  py.pitch = std::asin(std::clamp(-u.y(), -1.0, 1.0));
  py.yaw = std::atan2(-u.x(), -u.z());
  if (py.yaw <= -std::numbers::pi) py.yaw = std::numbers::pi;
  return py;
}

std::vector<bool> FrontalMask(std::span<const Eigen::Vector3d> gazes, double threshold_deg) {
  Require(threshold_deg > 0.0 && threshold_deg <= 180.0, ErrorKind::kInvalidInput,
          "frontal mask: threshold must lie in (0, 180]");
  std::vector<bool> mask(gazes.size());
  for (std::size_t i = 0; i < gazes.size(); ++i) {
    mask[i] = AngularErrorDeg(gazes[i], kFrontalAxis) <= threshold_deg;
  }
  return mask;
}

Eigen::Matrix3d RotationFromEuler(double yaw, double pitch, double roll) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(-pitch, Eigen::Vector3d::UnitX()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

Eigen::Vector3d AxisAngleFromMatrix(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

Eigen::Matrix3d MatrixFromAxisAngle(const Eigen::Vector3d& rotation) {
  const double angle = rotation.norm();
  if (angle < 1e-15) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, rotation / angle).toRotationMatrix();
}

Eigen::Vector3d CanonicalizeRotation(const Eigen::Vector3d& rotation) {
  if (rotation.norm() <= std::numbers::pi) return rotation;
  return AxisAngleFromMatrix(MatrixFromAxisAngle(rotation));
}

Eigen::Vector3d HeadDirection(const Eigen::Vector3d& rotation) {
  return (MatrixFromAxisAngle(rotation) * kFrontalAxis).normalized();
}

std::vector<PitchYawRecord> ReadPitchYawCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, fmt::format("pitch/yaw csv: cannot open {}", path.string()));
  std::vector<PitchYawRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line_no == 1) continue;  // header
    std::stringstream ss(line);
    std::string id, pitch, yaw;
    if (!std::getline(ss, id, ',') || !std::getline(ss, pitch, ',') || !std::getline(ss, yaw)) {
      Fail(ErrorKind::kParse, fmt::format("{}:{}: expected frame_id,pitch_rad,yaw_rad", path.string(), line_no));
    }
    try {
      out.push_back({id, {std::stod(pitch), std::stod(yaw)}});
    } catch (const std::exception&) {
      Fail(ErrorKind::kParse, fmt::format("{}:{}: non-numeric angle", path.string(), line_no));
    }
  }
  return out;
}

void WritePitchYawCsv(const std::filesystem::path& path, std::span<const PitchYawRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, fmt::format("pitch/yaw csv: cannot write {}", path.string()));
  out << "frame_id,pitch_rad,yaw_rad\n";
  for (const auto& r : records) {
    out << fmt::format("{},{:.17g},{:.17g}\n", r.frame_id, r.angles.pitch, r.angles.yaw);
  }
}

}  // namespace avattn
