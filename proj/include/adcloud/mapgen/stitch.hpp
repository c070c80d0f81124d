#pragma once

#include <vector>

#include "adcloud/mapgen/icp.hpp"

namespace adcloud::mapgen {

struct StitchedScan {
  LidarScan world;  // points in the world frame
  PoseEstimate pose;
  RigidTransform transform;  // sensor -> world
};

/// Checks strictly increasing scan times and one pose per scan at the same
/// timestamp. Throws TimeAlignment.
void check_time_alignment(const std::vector<LidarScan>& scans, const std::vector<PoseEstimate>& poses);

/// ICP seed for aligning scan i+1 (source) to scan i (target).
RigidTransform relative_seed(const PoseEstimate& target_pose, const PoseEstimate& source_pose);

/// W_0 = pose(first), W_{i+1} = W_i * T_i.
std::vector<RigidTransform> compose_chain(const PoseEstimate& first, const std::vector<RigidTransform>& relative);

PoseEstimate pose_from_transform(std::int64_t t, const RigidTransform& w);
LidarScan to_world(const LidarScan& scan, const RigidTransform& w);

/// Pairwise ICP between consecutive scans seeded from `poses`, chained from
/// the first pose. Throws TimeAlignment and whatever icp_align throws.
std::vector<StitchedScan> stitch(const std::vector<LidarScan>& scans, const std::vector<PoseEstimate>& poses,
                                 const IcpParams& params = {});

}  // namespace adcloud::mapgen
