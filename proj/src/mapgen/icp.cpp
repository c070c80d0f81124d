#include "adcloud/mapgen/icp.hpp"

#include <algorithm>
#include <numeric>

#include "adcloud/error.hpp"

namespace adcloud::mapgen {

namespace {

bool better(double d2, std::size_t i, const KdTree::Hit& best) {
  return d2 < best.dist2 || (d2 == best.dist2 && i < best.index);
}

}  // namespace

KdTree::KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
  std::vector<std::size_t> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, idx.size(), 0);
}

int KdTree::build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](std::size_t a, std::size_t b) {
    return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
  });
  const int n = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis});
  const int l = build(idx, lo, mid, depth + 1);
  const int r = build(idx, mid + 1, hi, depth + 1);
  nodes_[n].left = l;
  nodes_[n].right = r;
  return n;
}

void KdTree::search(int node, const Eigen::Vector3d& q, Hit& best) const {
  if (node < 0) return;
  const Node& nd = nodes_[node];
  const Eigen::Vector3d& p = points_[nd.point];
  const double d2 = (p - q).squaredNorm();
  if (better(d2, nd.point, best)) best = {nd.point, d2};
  const double diff = q[nd.axis] - p[nd.axis];
  const int near = diff < 0 ? nd.left : nd.right;
  const int far = diff < 0 ? nd.right : nd.left;
  search(near, q, best);
  // <= keeps equal-distance candidates with a lower index reachable
  if (diff * diff <= best.dist2) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Eigen::Vector3d& q) const {
  if (root_ < 0) throw Error(Errc::InvalidArgument, "nearest() on an empty tree");
  Hit best;
  search(root_, q, best);
  return best;
}

KdTree::Hit brute_force_nearest(const std::vector<Eigen::Vector3d>& points, const Eigen::Vector3d& q) {
  if (points.empty()) throw Error(Errc::InvalidArgument, "nearest() on an empty set");
  KdTree::Hit best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = (points[i] - q).squaredNorm();
    if (better(d2, i, best)) best = {i, d2};
  }
  return best;
}

RigidTransform kabsch(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst) {
  if (src.size() != dst.size() || src.empty()) throw Error(Errc::InvalidArgument, "kabsch needs equal, non-empty sets");
  Eigen::Vector3d cs = Eigen::Vector3d::Zero(), cd = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  if (!(s[0] > 0) || s[2] <= s[0] * 1e-10) {
    throw Error(Errc::DegenerateGeometry, "cross-covariance rank < 3 (" + std::to_string(src.size()) + " pairs)");
  }
  const Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = cd - t.rotation * cs;
  return t;
}

std::vector<Eigen::Vector3d> positions(const LidarScan& scan) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(scan.points.size());
  for (const auto& p : scan.points) out.emplace_back(p.x, p.y, p.z);
  return out;
}

IcpResult icp_align(const LidarScan& source, const LidarScan& target, const RigidTransform& init,
                    const IcpParams& params) {
  if (source.points.empty() || target.points.empty()) throw Error(Errc::InvalidArgument, "icp_align on an empty scan");
  const auto dst = positions(target);
  const KdTree tree(dst);
  const auto src = positions(source);
  const double cap2 = params.max_correspondence_distance * params.max_correspondence_distance;

  std::vector<Eigen::Vector3d> pair_src, pair_dst;
  // Truncated objective: pairs beyond the cap count as cap², so a Kabsch
  // step on the inliers can never increase it.
  auto correspond = [&](const RigidTransform& t) {
    pair_src.clear();
    pair_dst.clear();
    double total = 0;
    for (const auto& p : src) {
      const Eigen::Vector3d m = t.apply(p);
      const auto hit = tree.nearest(m);
      if (hit.dist2 <= cap2) {
        pair_src.push_back(m);
        pair_dst.push_back(dst[hit.index]);
        total += hit.dist2;
      } else {
        total += cap2;
      }
    }
    return total / static_cast<double>(src.size());
  };

  IcpResult out;
  out.transform = init;
  double current = correspond(out.transform);
  out.residual_history.push_back(current);
  for (int it = 0; it < params.max_iterations; ++it) {
    if (pair_src.empty()) {
      throw Error(Errc::NoCorrespondences,
                  "no pairs within " + std::to_string(params.max_correspondence_distance) + " m");
    }
    if (pair_src.size() < 3) {
      throw Error(Errc::DegenerateGeometry, std::to_string(pair_src.size()) + " pairs cannot fix a rigid transform");
    }
    const RigidTransform step = kabsch(pair_src, pair_dst);  // also rejects rank-deficient pairs
    if (current == 0) {  // exact fit; the step would only add rounding
      out.converged = true;
      break;
    }
    const RigidTransform next = step.compose(out.transform);
    const double candidate = correspond(next);
    // In exact arithmetic the step cannot raise the objective; a rise is
    // rounding at the optimum, so keep the previous transform.
    if (candidate > current) {
      out.converged = true;
      break;
    }
    out.transform = next;
    current = candidate;
    out.residual_history.push_back(current);
    ++out.iterations;
    const double change = (step.rotation - Eigen::Matrix3d::Identity()).norm() + step.translation.norm();
    if (change < params.epsilon) {
      out.converged = true;
      break;
    }
  }
  out.residual = current;
  return out;
}

}  // namespace adcloud::mapgen
