#pragma once

#include <vector>

#include "adcloud/mapgen/geometry.hpp"

namespace adcloud::mapgen {

/// Dead reckoning with midpoint heading. Samples must fall in
/// (prev.t, prev.t + dt]. Throws NonPositiveDt, TimeAlignment.
PoseEstimate propagate(const PoseEstimate& prev, const OdomSample& odom, const ImuSample& imu, double dt);

/// Complementary blend toward the GPS fix with gain
/// k = sigma_prop² / (sigma_prop² + gps.sigma²). Heading is kept.
/// Throws StaleGps when |gps.t - pose.t| exceeds the window, InvalidArgument
/// for a non-positive sigma.
PoseEstimate gps_correct(const PoseEstimate& pose, const GpsSample& gps, double sigma_prop, double window_s);

struct FusionParams {
  double gps_window_s = 0.05;
  /// Position uncertainty right after a correction if none has happened yet.
  double sigma_initial = 0.05;
  /// Growth of the propagation sigma per meter driven since the last fix.
  double drift_per_meter = 0.05;
  bool use_gps = true;
};

/// Propagates through every odometry sample (IMU joined by timestamp) and
/// applies each GPS fix at the pose nearest in time, if within the window.
/// Throws TimeAlignment, NonPositiveDt.
std::vector<PoseEstimate> fuse(const std::vector<OdomSample>& odom, const std::vector<ImuSample>& imu,
                               const std::vector<GpsSample>& gps, const PoseEstimate& initial,
                               const FusionParams& params = {});

}  // namespace adcloud::mapgen
