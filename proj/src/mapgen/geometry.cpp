#include "adcloud/mapgen/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "adcloud/error.hpp"

namespace adcloud::mapgen {

using binstream::FieldValue;

double normalize_angle(double a) {
  constexpr double kTwoPi = 2 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

RigidTransform RigidTransform::from_pose(double x, double y, double theta) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  t.translation = {x, y, 0};
  return t;
}

RigidTransform RigidTransform::compose(const RigidTransform& o) const {
  return {rotation * o.rotation, rotation * o.translation + translation};
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

double RigidTransform::angle() const {
  const double c = std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

double RigidTransform::yaw() const { return std::atan2(rotation(1, 0), rotation(0, 0)); }

bool RigidTransform::is_valid(double tol) const {
  return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::fabs(rotation.determinant() - 1.0) <= tol;
}

Bytes RigidTransform::pack() const {
  Bytes out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) binstream::put_f64(out, rotation(r, c));
  }
  for (int i = 0; i < 3; ++i) binstream::put_f64(out, translation(i));
  return out;
}

RigidTransform RigidTransform::unpack(const Bytes& b) {
  const auto v = decode_f64s(b, 12);
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[static_cast<std::size_t>(3 * r + c)];
  }
  t.translation = {v[9], v[10], v[11]};
  return t;
}

Bytes encode_points(const std::vector<LidarPoint>& pts) {
  Bytes out;
  out.reserve(4 + pts.size() * 32);
  binstream::put_u32(out, static_cast<std::uint32_t>(pts.size()));
  for (const auto& p : pts) {
    binstream::put_f64(out, p.x);
    binstream::put_f64(out, p.y);
    binstream::put_f64(out, p.z);
    binstream::put_f64(out, p.reflectance);
  }
  return out;
}

std::vector<LidarPoint> decode_points(const Bytes& b) {
  if (b.size() < 4) throw Error(Errc::ParseError, "lidar payload shorter than its count");
  const std::uint32_t n = binstream::get_u32(b.data());
  if (b.size() != 4 + static_cast<std::size_t>(n) * 32) throw Error(Errc::ParseError, "lidar payload size mismatch");
  std::vector<LidarPoint> pts(n);
  const std::uint8_t* p = b.data() + 4;
  for (auto& pt : pts) {
    pt.x = binstream::get_f64(p);
    pt.y = binstream::get_f64(p + 8);
    pt.z = binstream::get_f64(p + 16);
    pt.reflectance = std::clamp(binstream::get_f64(p + 24), 0.0, 1.0);
    p += 32;
  }
  return pts;
}

Bytes encode_f64s(std::initializer_list<double> v) {
  Bytes out;
  for (double d : v) binstream::put_f64(out, d);
  return out;
}

std::vector<double> decode_f64s(const Bytes& b, std::size_t expected) {
  if (b.size() != expected * 8) {
    throw Error(Errc::ParseError, "expected " + std::to_string(expected) + " Float64 values, got " +
                                      std::to_string(b.size()) + " bytes");
  }
  std::vector<double> v(expected);
  for (std::size_t i = 0; i < expected; ++i) v[i] = binstream::get_f64(b.data() + 8 * i);
  return v;
}

BinaryRecord pose_to_record(const PoseEstimate& p) {
  return BinaryRecord{FieldValue::int64(p.t), FieldValue::float64(p.x), FieldValue::float64(p.y),
                      FieldValue::float64(p.theta), FieldValue::int64(static_cast<std::int64_t>(p.source))};
}

PoseEstimate pose_from_record(const BinaryRecord& r) {
  return PoseEstimate{r[0].as_int64(), r[1].as_float64(), r[2].as_float64(), r[3].as_float64(),
                      static_cast<PoseSource>(r[4].as_int64())};
}

double position_rms(const std::vector<PoseEstimate>& est, const std::vector<PoseEstimate>& truth) {
  std::map<std::int64_t, const PoseEstimate*> by_t;
  for (const auto& p : truth) by_t[p.t] = &p;
  double sum = 0;
  std::size_t n = 0;
  for (const auto& p : est) {
    auto it = by_t.find(p.t);
    if (it == by_t.end()) continue;
    const double dx = p.x - it->second->x, dy = p.y - it->second->y;
    sum += dx * dx + dy * dy;
    ++n;
  }
  if (n == 0) throw Error(Errc::TimeAlignment, "no common timestamps");
  return std::sqrt(sum / static_cast<double>(n));
}

}  // namespace adcloud::mapgen
