#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "adcloud/binstream/codec.hpp"

namespace adcloud::mapgen {

using binstream::BinaryRecord;
using binstream::Bytes;

enum class PoseSource { Propagated = 0, Corrected = 1, IcpRefined = 2 };

struct PoseEstimate {
  std::int64_t t = 0;  // ns
  double x = 0, y = 0;
  double theta = 0;  // (-pi, pi]
  PoseSource source = PoseSource::Propagated;

  bool operator==(const PoseEstimate&) const = default;
};

struct OdomSample {
  std::int64_t t = 0;
  double speed = 0;  // m/s
};

struct ImuSample {
  std::int64_t t = 0;
  double yaw_rate = 0;  // rad/s
};

struct GpsSample {
  std::int64_t t = 0;
  double x = 0, y = 0;
  double sigma = 1;  // m
};

struct LidarPoint {
  double x = 0, y = 0, z = 0;
  double reflectance = 0;

  bool operator==(const LidarPoint&) const = default;
};

struct LidarScan {
  std::int64_t t = 0;
  std::vector<LidarPoint> points;  // sensor frame
};

/// Wraps to (-pi, pi].
double normalize_angle(double a);

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  /// Planar pose as a transform from the vehicle frame to the world frame.
  static RigidTransform from_pose(double x, double y, double theta);
  static RigidTransform from_pose(const PoseEstimate& p) { return from_pose(p.x, p.y, p.theta); }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  /// (this * other)(p) == this(other(p))
  RigidTransform compose(const RigidTransform& other) const;
  RigidTransform inverse() const;
  /// Rotation angle (rad) of this transform.
  double angle() const;
  double yaw() const;
  /// RᵀR = I and det R = 1 within `tol`.
  bool is_valid(double tol = 1e-9) const;

  Bytes pack() const;  // 12 x Float64-LE: row-major R then t
  static RigidTransform unpack(const Bytes& b);
};

// Log payload layouts.
Bytes encode_points(const std::vector<LidarPoint>& pts);  // u32 count + 4 x Float64 per point
std::vector<LidarPoint> decode_points(const Bytes& b);    // ParseError
Bytes encode_f64s(std::initializer_list<double> v);
std::vector<double> decode_f64s(const Bytes& b, std::size_t expected);  // ParseError

BinaryRecord pose_to_record(const PoseEstimate& p);  // [Int64 t, Float64 x, y, theta, Int64 source]
PoseEstimate pose_from_record(const BinaryRecord& r);

/// Position RMS error of `est` against `truth`, joined by timestamp.
double position_rms(const std::vector<PoseEstimate>& est, const std::vector<PoseEstimate>& truth);

}  // namespace adcloud::mapgen
