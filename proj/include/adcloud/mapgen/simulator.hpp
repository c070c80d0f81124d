#pragma once

#include <filesystem>
#include <json.hpp>
#include <vector>

#include "adcloud/mapgen/geometry.hpp"

namespace adcloud::mapgen {

/// Synthetic drive through a static world: constant speed, gently weaving
/// yaw rate (0.05·sin(0.2 t)), biased wheel odometry and gyro, noisy GPS.
struct DriveConfig {
  double duration_s = 30;
  double speed = 2;
  double odom_hz = 50;
  int lidar_every = 10;  // one scan per this many odometry samples
  int gps_every = 50;
  double gps_sigma = 0.5;
  double odom_scale = 1.03;
  double yaw_rate_bias = 0.005;
  double yaw_rate_noise = 0.002;
  double lidar_range = 8;
  double lidar_noise = 0.002;
  double ground_spacing = 0.6;
  std::uint64_t seed = 7;
  std::int64_t start_ns = 1'700'000'000'000'000'000;
};

struct Drive {
  std::vector<PoseEstimate> truth;  // at every odometry timestamp
  std::vector<OdomSample> odom;
  std::vector<ImuSample> imu;
  std::vector<GpsSample> gps;
  std::vector<LidarScan> scans;
  std::vector<PoseEstimate> scan_truth;
  std::vector<LidarPoint> world;
};

Drive simulate_drive(const DriveConfig& config = {});

struct DriveFiles {
  std::filesystem::path odom, imu, gps, lidar, labels;
};

/// Writes odom.bag, imu.bag, gps.bag, lidar.bag and labels.json (one lane
/// along the true path, a reference line, a speed-limit sign) into `dir`.
DriveFiles write_drive(const Drive& drive, const std::filesystem::path& dir);
nlohmann::json default_labels(const Drive& drive);

}  // namespace adcloud::mapgen
