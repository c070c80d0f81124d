#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "adcloud/engine/cluster.hpp"
#include "adcloud/mapgen/fusion.hpp"
#include "adcloud/mapgen/grid.hpp"
#include "adcloud/mapgen/icp.hpp"

namespace adcloud::mapgen {

struct MapConfig {
  std::filesystem::path odom_bag, imu_bag, gps_bag, lidar_bag;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> out;
  double cell_size = kDefaultCellSize;
  FusionParams fusion;
  IcpParams icp;
  PoseEstimate initial;  // pose at the first odometry sample
  std::size_t lidar_partitions = 4;
  /// true: stages hand over through cache tiers only; false: every stage
  /// output is persisted to the backing store.
  bool pipelined = true;
};

struct StageReport {
  std::string name;
  double seconds = 0;
  std::uint64_t bytes_persisted = 0;
  std::optional<engine::JobMetrics> job;  // absent for driver-only stages
};

struct MapResult {
  GridMap map;
  Bytes map_bytes;
  std::vector<PoseEstimate> fused;    // one per odometry sample
  std::vector<PoseEstimate> refined;  // one per scan
  std::vector<StageReport> stages;
  std::uint64_t bytes_persisted = 0;  // by stage jobs, excluding input loading
  std::uint64_t scans = 0;
  std::vector<std::string> warnings;
};

/// load -> fuse -> stitch -> rasterize -> label. Writes the map file when
/// `config.out` is set. Throws EmptyInput (no LiDAR scans), TimeAlignment,
/// MalformedLabelSpec, ParseError, or the engine error of a failed stage.
MapResult run_map_pipeline(engine::Cluster& cluster, const MapConfig& config);

nlohmann::json to_json(const MapResult& r);

/// map.load, map.fuse, map.align, map.raster.
void register_map_ops(engine::OpRegistry& registry = engine::OpRegistry::global());

}  // namespace adcloud::mapgen
