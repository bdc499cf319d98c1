// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

// Head-pose and gaze representations, the two supervision losses and the
// angular metrics. Gaze lives in camera coordinates with the frontal
// (camera-facing) axis at (0, 0, -1).

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace avattn {

using Vector6d = Eigen::Matrix<double, 6, 1>;

struct HeadPose6D {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();     // axis-angle, radians
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Vector6d AsVector() const;
  static HeadPose6D FromVector(const Vector6d& v);
};

struct GazeVector {
  Eigen::Vector3d direction = Eigen::Vector3d(0.0, 0.0, -1.0);
};

struct PitchYaw {
  double pitch = 0.0;
  double yaw = 0.0;
};

inline const Eigen::Vector3d kFrontalAxis(0.0, 0.0, -1.0);
inline constexpr double kMinNorm = 1e-12;

struct LossWeights {
  double headpose = 1.0;
  double gaze = 1.0;
};

/// Cosine of the angle between two vectors, clamped to [-1, 1].
/// Throws kDegenerateVector when either norm is <= 1e-12.
double CosineSimilarity(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// 1 - cos(pred, target); in [0, 2].
double GazeLoss(const Eigen::Vector3d& pred, const Eigen::Vector3d& target);
/// d GazeLoss / d pred.
Eigen::Vector3d GazeLossGradient(const Eigen::Vector3d& pred, const Eigen::Vector3d& target);

/// Mean squared error over the six pose components.
double HeadposeLoss(const Vector6d& pred, const Vector6d& target);
Vector6d HeadposeLossGradient(const Vector6d& pred, const Vector6d& target);

double TotalLoss(double headpose_loss, double gaze_loss);
double TotalLoss(double headpose_loss, double gaze_loss, const LossWeights& weights);

double AngularErrorDeg(const Eigen::Vector3d& pred, const Eigen::Vector3d& target);

Eigen::Vector3d PitchYawToVector(const PitchYaw& py);
PitchYaw VectorToPitchYaw(const Eigen::Vector3d& v);

/// mask[i] is true iff gaze i lies within `threshold_deg` of the frontal axis.
std::vector<bool> FrontalMask(std::span<const Eigen::Vector3d> gazes, double threshold_deg);

// Rotation helpers. A head with zero rotation faces the camera; yaw turns
// about +y, pitch raises the face, roll spins about the viewing axis, so
// HeadDirection(RotationFromEuler(y, p, 0)) == PitchYawToVector({p, y}).
Eigen::Matrix3d RotationFromEuler(double yaw, double pitch, double roll);
Eigen::Vector3d AxisAngleFromMatrix(const Eigen::Matrix3d& r);
Eigen::Matrix3d MatrixFromAxisAngle(const Eigen::Vector3d& rotation);
/// Rotation vector with norm in [0, pi] describing the same rotation.
Eigen::Vector3d CanonicalizeRotation(const Eigen::Vector3d& rotation);
/// Frontal axis rotated by the head orientation (unit vector).
Eigen::Vector3d HeadDirection(const Eigen::Vector3d& rotation);

struct PitchYawRecord {
  std::string frame_id;
  PitchYaw angles;
};

/// CSV with header `frame_id,pitch_rad,yaw_rad`.
std::vector<PitchYawRecord> ReadPitchYawCsv(const std::filesystem::path& path);
void WritePitchYawCsv(const std::filesystem::path& path, std::span<const PitchYawRecord> records);

}  // namespace avattn
