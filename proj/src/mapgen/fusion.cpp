#include "adcloud/mapgen/fusion.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "adcloud/error.hpp"

namespace adcloud::mapgen {

PoseEstimate propagate(const PoseEstimate& prev, const OdomSample& odom, const ImuSample& imu, double dt) {
  if (!(dt > 0)) throw Error(Errc::NonPositiveDt, "dt = " + std::to_string(dt));
  const auto dt_ns = static_cast<std::int64_t>(std::llround(dt * 1e9));
  for (std::int64_t t : {odom.t, imu.t}) {
    if (t <= prev.t || t > prev.t + dt_ns) throw Error(Errc::TimeAlignment, "sample outside the propagation step");
  }
  const double mid = prev.theta + imu.yaw_rate * dt / 2;
  PoseEstimate next;
  next.t = prev.t + dt_ns;
  next.x = prev.x + odom.speed * dt * std::cos(mid);
  next.y = prev.y + odom.speed * dt * std::sin(mid);
  next.theta = normalize_angle(prev.theta + imu.yaw_rate * dt);
  next.source = PoseSource::Propagated;
  return next;
}

PoseEstimate gps_correct(const PoseEstimate& pose, const GpsSample& gps, double sigma_prop, double window_s) {
  if (!(gps.sigma > 0)) throw Error(Errc::InvalidArgument, "gps sigma must be > 0");
  if (std::fabs(static_cast<double>(gps.t - pose.t)) > window_s * 1e9) {
    throw Error(Errc::StaleGps, "fix at " + std::to_string(gps.t) + " vs pose at " + std::to_string(pose.t));
  }
  const double vp = sigma_prop * sigma_prop;
  const double vg = gps.sigma * gps.sigma;
  const double k = std::isinf(vg) ? 0.0 : vp / (vp + vg);
  PoseEstimate out = pose;
  out.x = (1 - k) * pose.x + k * gps.x;
  out.y = (1 - k) * pose.y + k * gps.y;
  out.source = PoseSource::Corrected;
  return out;
}

std::vector<PoseEstimate> fuse(const std::vector<OdomSample>& odom, const std::vector<ImuSample>& imu,
                               const std::vector<GpsSample>& gps, const PoseEstimate& initial,
                               const FusionParams& params) {
  std::map<std::int64_t, const ImuSample*> imu_at;
  for (const auto& s : imu) imu_at[s.t] = &s;
  std::vector<PoseEstimate> poses;
  if (odom.empty()) return poses;

  PoseEstimate cur = initial;
  cur.t = odom.front().t;
  poses.push_back(cur);
  double sigma_floor = params.sigma_initial;
  double distance = 0;
  std::size_t g = 0;
  const auto window_ns = static_cast<std::int64_t>(params.gps_window_s * 1e9);

  auto apply_fixes = [&](std::size_t i) {
    // fixes whose nearest pose is this one
    while (g < gps.size()) {
      const auto& fix = gps[g];
      const bool later_is_closer =
          i + 1 < odom.size() && std::llabs(odom[i + 1].t - fix.t) < std::llabs(odom[i].t - fix.t);
      if (later_is_closer) break;
      ++g;
      if (!params.use_gps || std::llabs(fix.t - poses.back().t) > window_ns) continue;
      const double sigma_prop = std::hypot(sigma_floor, params.drift_per_meter * distance);
      poses.back() = gps_correct(poses.back(), fix, sigma_prop, params.gps_window_s);
      const double vp = sigma_prop * sigma_prop, vg = fix.sigma * fix.sigma;
      sigma_floor = std::sqrt(vp * vg / (vp + vg));
      distance = 0;
    }
  };

  apply_fixes(0);
  for (std::size_t i = 1; i < odom.size(); ++i) {
    auto it = imu_at.find(odom[i].t);
    if (it == imu_at.end()) throw Error(Errc::TimeAlignment, "no IMU sample at " + std::to_string(odom[i].t));
    const double dt = static_cast<double>(odom[i].t - poses.back().t) / 1e9;
    auto next = propagate(poses.back(), odom[i], *it->second, dt);
    next.t = odom[i].t;  // exact, independent of dt rounding
    distance += std::fabs(odom[i].speed) * dt;
    poses.push_back(next);
    apply_fixes(i);
  }
  return poses;
}

}  // namespace adcloud::mapgen
