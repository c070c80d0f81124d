#include "adcloud/mapgen/simulator.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "adcloud/binstream/bag_format.hpp"
#include "adcloud/error.hpp"

namespace adcloud::mapgen {

using binstream::FieldValue;

namespace {

double true_heading(double t) { return 0.25 * (1 - std::cos(0.2 * t)); }

BinaryRecord bag_record(const char* topic, std::int64_t t, Bytes payload) {
  return {FieldValue::utf8(topic), FieldValue::int64(t), FieldValue::bytes(std::move(payload))};
}

}  // namespace

Drive simulate_drive(const DriveConfig& c) {
  if (!(c.odom_hz > 0) || !(c.duration_s > 0) || c.lidar_every < 1 || c.gps_every < 1) {
    throw Error(Errc::InvalidArgument, "bad drive config");
  }
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double dt = 1.0 / c.odom_hz;
  const auto steps = static_cast<std::size_t>(std::llround(c.duration_s * c.odom_hz));
  const auto dt_ns = static_cast<std::int64_t>(std::llround(dt * 1e9));

  Drive d;
  double x = 0, y = 0;
  constexpr int kSub = 20;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const std::int64_t ts = c.start_ns + static_cast<std::int64_t>(k) * dt_ns;
    if (k > 0) {
      const double t0 = t - dt;
      for (int s = 0; s < kSub; ++s) {  // fine midpoint integration of the true path
        const double h = dt / kSub;
        const double th = true_heading(t0 + (s + 0.5) * h);
        x += c.speed * h * std::cos(th);
        y += c.speed * h * std::sin(th);
      }
      const double yaw_rate = (true_heading(t) - true_heading(t0)) / dt;
      d.odom.push_back({ts, c.speed * c.odom_scale});
      d.imu.push_back({ts, yaw_rate + c.yaw_rate_bias + c.yaw_rate_noise * unit(rng)});
    } else {
      d.odom.push_back({ts, c.speed * c.odom_scale});
      d.imu.push_back({ts, c.yaw_rate_bias});
    }
    d.truth.push_back({ts, x, y, normalize_angle(true_heading(t)), PoseSource::Propagated});
  }
  for (std::size_t k = 0; k <= steps; k += static_cast<std::size_t>(c.gps_every)) {
    const auto& p = d.truth[k];
    d.gps.push_back({p.t, p.x + c.gps_sigma * unit(rng), p.y + c.gps_sigma * unit(rng), c.gps_sigma});
  }

  // World: jittered ground lattice with gentle relief, plus poles.
  double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  for (const auto& p : d.truth) {
    lo_x = std::min(lo_x, p.x), hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y), hi_y = std::max(hi_y, p.y);
  }
  const double margin = c.lidar_range + 1;
  std::uniform_real_distribution<double> jitter(-0.2 * c.ground_spacing, 0.2 * c.ground_spacing);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (double gx = lo_x - margin; gx <= hi_x + margin; gx += c.ground_spacing) {
    for (double gy = lo_y - margin; gy <= hi_y + margin; gy += c.ground_spacing) {
      const double px = gx + jitter(rng), py = gy + jitter(rng);
      const double pz = -1.8 + 0.1 * std::sin(0.3 * px) + 0.05 * std::cos(0.5 * py);
      d.world.push_back({px, py, pz, 0.15 + 0.2 * u01(rng)});
    }
  }
  const auto poles = static_cast<int>((hi_x - lo_x + 2 * margin) * (hi_y - lo_y + 2 * margin) / 30);
  for (int i = 0; i < poles; ++i) {
    const double px = lo_x - margin + u01(rng) * (hi_x - lo_x + 2 * margin);
    const double py = lo_y - margin + u01(rng) * (hi_y - lo_y + 2 * margin);
    for (int j = 0; j < 12; ++j) d.world.push_back({px, py, -1.7 + 0.25 * j, 0.8 + 0.15 * u01(rng)});
  }

  const double r2 = c.lidar_range * c.lidar_range;
  for (std::size_t k = 0; k <= steps; k += static_cast<std::size_t>(c.lidar_every)) {
    const auto& p = d.truth[k];
    const double ct = std::cos(p.theta), st = std::sin(p.theta);
    LidarScan scan{p.t, {}};
    for (const auto& w : d.world) {
      const double dx = w.x - p.x, dy = w.y - p.y;
      if (dx * dx + dy * dy > r2) continue;
      scan.points.push_back({ct * dx + st * dy + c.lidar_noise * unit(rng), -st * dx + ct * dy + c.lidar_noise * unit(rng),
                             w.z + c.lidar_noise * unit(rng), w.reflectance});
    }
    d.scans.push_back(std::move(scan));
    d.scan_truth.push_back(p);
  }
  return d;
}

nlohmann::json default_labels(const Drive& d) {
  nlohmann::json lane = nlohmann::json::array(), ref = nlohmann::json::array();
  for (std::size_t k = 0; k < d.truth.size(); k += 25) {
    const auto& p = d.truth[k];
    lane.push_back({p.x, p.y});
    // reference line offset 1.75 m to the left of the path
    ref.push_back({p.x - 1.75 * std::sin(p.theta), p.y + 1.75 * std::cos(p.theta)});
  }
  const auto& mid = d.truth[d.truth.size() / 2];
  return {{"lanes", {{{"id", 1}, {"width", 3.5}, {"polyline", lane}}}},
          {"reference_lines", {{{"polyline", ref}}}},
          {"signs",
           {{{"point", {mid.x + 3 * std::sin(mid.theta), mid.y - 3 * std::cos(mid.theta)}},
             {"kind", "speed_limit"},
             {"value", 30}},
            {{"point", {1e6, 1e6}}, {"kind", "stop"}}}}};
}

DriveFiles write_drive(const Drive& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  DriveFiles f{dir / "odom.bag", dir / "imu.bag", dir / "gps.bag", dir / "lidar.bag", dir / "labels.json"};
  std::vector<BinaryRecord> odom, imu, gps, lidar;
  for (const auto& s : d.odom) odom.push_back(bag_record("odom", s.t, encode_f64s({s.speed})));
  for (const auto& s : d.imu) imu.push_back(bag_record("imu", s.t, encode_f64s({s.yaw_rate})));
  for (const auto& s : d.gps) gps.push_back(bag_record("gps", s.t, encode_f64s({s.x, s.y, s.sigma})));
  for (const auto& s : d.scans) lidar.push_back(bag_record("lidar", s.t, encode_points(s.points)));
  binstream::write_bag_file(f.odom, odom);
  binstream::write_bag_file(f.imu, imu);
  binstream::write_bag_file(f.gps, gps);
  binstream::write_bag_file(f.lidar, lidar);
  std::ofstream(f.labels) << default_labels(d).dump(2) << "\n";
  return f;
}

}  // namespace adcloud::mapgen
