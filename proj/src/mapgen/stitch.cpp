#include "adcloud/mapgen/stitch.hpp"

#include "adcloud/error.hpp"

namespace adcloud::mapgen {

void check_time_alignment(const std::vector<LidarScan>& scans, const std::vector<PoseEstimate>& poses) {
  if (scans.size() != poses.size()) {
    throw Error(Errc::TimeAlignment,
                std::to_string(scans.size()) + " scans vs " + std::to_string(poses.size()) + " poses");
  }
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (i > 0 && scans[i].t <= scans[i - 1].t) {
      throw Error(Errc::TimeAlignment, "scan " + std::to_string(i) + " is not after its predecessor");
    }
    if (scans[i].t != poses[i].t) {
      throw Error(Errc::TimeAlignment, "no pose at scan time " + std::to_string(scans[i].t));
    }
  }
}

RigidTransform relative_seed(const PoseEstimate& target_pose, const PoseEstimate& source_pose) {
  return RigidTransform::from_pose(target_pose).inverse().compose(RigidTransform::from_pose(source_pose));
}

std::vector<RigidTransform> compose_chain(const PoseEstimate& first, const std::vector<RigidTransform>& relative) {
  std::vector<RigidTransform> chain{RigidTransform::from_pose(first)};
  for (const auto& t : relative) chain.push_back(chain.back().compose(t));
  return chain;
}

PoseEstimate pose_from_transform(std::int64_t t, const RigidTransform& w) {
  return {t, w.translation.x(), w.translation.y(), normalize_angle(w.yaw()), PoseSource::IcpRefined};
}

LidarScan to_world(const LidarScan& scan, const RigidTransform& w) {
  LidarScan out{scan.t, {}};
  out.points.reserve(scan.points.size());
  for (const auto& p : scan.points) {
    const Eigen::Vector3d q = w.apply({p.x, p.y, p.z});
    out.points.push_back({q.x(), q.y(), q.z(), p.reflectance});
  }
  return out;
}

std::vector<StitchedScan> stitch(const std::vector<LidarScan>& scans, const std::vector<PoseEstimate>& poses,
                                 const IcpParams& params) {
  check_time_alignment(scans, poses);
  if (scans.empty()) throw Error(Errc::EmptyInput, "no LiDAR scans to stitch");
  std::vector<RigidTransform> rel;
  for (std::size_t i = 0; i + 1 < scans.size(); ++i) {
    rel.push_back(icp_align(scans[i + 1], scans[i], relative_seed(poses[i], poses[i + 1]), params).transform);
  }
  const auto chain = compose_chain(poses.front(), rel);
  std::vector<StitchedScan> out;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    out.push_back({to_world(scans[i], chain[i]), pose_from_transform(scans[i].t, chain[i]), chain[i]});
  }
  return out;
}

}  // namespace adcloud::mapgen
