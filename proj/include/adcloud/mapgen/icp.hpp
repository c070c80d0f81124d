#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "adcloud/mapgen/geometry.hpp"

namespace adcloud::mapgen {

/// Static 3-d tree over a fixed point set. Nearest-neighbour ties resolve to
/// the lower index, so results match brute_force_nearest exactly.
class KdTree {
 public:
  explicit KdTree(std::vector<Eigen::Vector3d> points);

  struct Hit {
    std::size_t index = 0;
    double dist2 = std::numeric_limits<double>::infinity();
  };
  /// Throws InvalidArgument on an empty tree.
  Hit nearest(const Eigen::Vector3d& q) const;
  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1, right = -1;
  };
  int build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth);
  void search(int node, const Eigen::Vector3d& q, Hit& best) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

KdTree::Hit brute_force_nearest(const std::vector<Eigen::Vector3d>& points, const Eigen::Vector3d& q);

/// Closed-form least-squares rigid transform mapping `src[i]` onto `dst[i]`.
/// Throws DegenerateGeometry when the cross-covariance has rank < 3,
/// InvalidArgument on size mismatch.
RigidTransform kabsch(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst);

struct IcpParams {
  int max_iterations = 50;
  double epsilon = 1e-9;
  double max_correspondence_distance = 0.3;
};

struct IcpResult {
  RigidTransform transform;
  /// Mean over all source points of min(d², max_dist²) at `transform`.
  double residual = 0;
  int iterations = 0;
  bool converged = false;
  /// residual at `init`, then after each accepted iteration; non-increasing
  std::vector<double> residual_history;
};

/// Point-to-point ICP. The result maps source-frame points into the target
/// frame. Throws InvalidArgument (empty scan), NoCorrespondences,
/// DegenerateGeometry.
IcpResult icp_align(const LidarScan& source, const LidarScan& target, const RigidTransform& init,
                    const IcpParams& params = {});

std::vector<Eigen::Vector3d> positions(const LidarScan& scan);

}  // namespace adcloud::mapgen
