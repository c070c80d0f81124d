#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "adcloud/binstream/bag_format.hpp"
#include "adcloud/error.hpp"
#include "adcloud/mapgen/fusion.hpp"
#include "adcloud/mapgen/grid.hpp"
#include "adcloud/mapgen/icp.hpp"
#include "adcloud/mapgen/pipeline.hpp"
#include "adcloud/mapgen/simulator.hpp"
#include "adcloud/mapgen/stitch.hpp"
#include "support/temp_dir.hpp"

using namespace adcloud;
using namespace adcloud::mapgen;
using adcloud::testing::TempDir;

namespace {

constexpr double kDeg = std::numbers::pi / 180;

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidArgument;
}

PoseEstimate pose(std::int64_t t, double x, double y, double th) { return {t, x, y, th, PoseSource::Propagated}; }

LidarScan random_cloud(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> ux(-5, 5), uy(-4, 4), uz(-2, 2), ur(0, 1);
  LidarScan s{0, {}};
  for (std::size_t i = 0; i < n; ++i) s.points.push_back({ux(rng), uy(rng), uz(rng), ur(rng)});
  return s;
}

RigidTransform planted(double yaw, double roll, double tx, double ty, double tz) {
  RigidTransform t;
  t.rotation = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
                   .toRotationMatrix();
  t.translation = {tx, ty, tz};
  return t;
}

LidarScan apply(const RigidTransform& t, const LidarScan& s) { return to_world(s, t); }

double rot_error(const RigidTransform& a, const RigidTransform& b) {
  return a.compose(b.inverse()).angle();
}

double trans_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation - b.translation).norm();
}

}  // namespace

// ---- propagation and correction

TEST(Propagate, StationaryKeepsPose) {
  const auto p = propagate(pose(0, 1, 2, 0.3), {500'000'000, 0}, {500'000'000, 0}, 0.5);
  EXPECT_EQ(p.t, 500'000'000);
  EXPECT_EQ(p.x, 1);
  EXPECT_EQ(p.y, 2);
  EXPECT_EQ(p.theta, 0.3);
}

TEST(Propagate, StraightLine) {
  const auto p = propagate(pose(0, 0, 0, 0), {1'000'000'000, 1}, {1'000'000'000, 0}, 1);
  EXPECT_DOUBLE_EQ(p.x, 1);
  EXPECT_EQ(p.y, 0);
  EXPECT_EQ(p.theta, 0);
}

TEST(Propagate, Preconditions) {
  EXPECT_EQ(error_of([] { propagate(pose(0, 0, 0, 0), {0, 1}, {0, 0}, 0); }), Errc::NonPositiveDt);
  EXPECT_EQ(error_of([] { propagate(pose(0, 0, 0, 0), {2'000'000'000, 1}, {1'000'000'000, 0}, 1); }),
            Errc::TimeAlignment);
}

TEST(Propagate, HeadingStaysNormalized) {
  auto p = pose(0, 0, 0, 3.1);
  p = propagate(p, {100'000'000, 1}, {100'000'000, 1.0}, 0.1);
  EXPECT_GT(p.theta, -std::numbers::pi);
  EXPECT_LE(p.theta, std::numbers::pi);
  EXPECT_NEAR(p.theta, 3.2 - 2 * std::numbers::pi, 1e-12);
}

// Closed-form arc: x = v/w sin(wT), y = v/w (1 - cos(wT)).
TEST(Propagate, ConvergesToCircularArc) {
  const double v = 1.5, w = 0.4, total = 4;
  const double ex = v / w * std::sin(w * total), ey = v / w * (1 - std::cos(w * total));
  std::vector<double> errs;
  for (int n : {50, 100, 200, 400, 800, 1600}) {
    auto p = pose(0, 0, 0, 0);
    const double dt = total / n;
    const auto dt_ns = static_cast<std::int64_t>(std::llround(dt * 1e9));
    for (int i = 1; i <= n; ++i) p = propagate(p, {p.t + dt_ns, v}, {p.t + dt_ns, w}, dt);
    errs.push_back(std::hypot(p.x - ex, p.y - ey));
  }
  EXPECT_LT(errs.back(), 1e-4);
  for (std::size_t i = 1; i < errs.size(); ++i) {
    const double ratio = errs[i - 1] / errs[i];
    EXPECT_GT(ratio, 3.5) << "step " << i;  // O(dt²): halving dt quarters the error
    EXPECT_LT(ratio, 4.5) << "step " << i;
  }
}

TEST(GpsCorrect, InfiniteSigmaLeavesPose) {
  const auto p = pose(10, 1, 2, 0.5);
  const auto c = gps_correct(p, {10, 50, 60, std::numeric_limits<double>::infinity()}, 1, 0.05);
  EXPECT_EQ(c.x, 1);
  EXPECT_EQ(c.y, 2);
  EXPECT_EQ(c.theta, 0.5);
  EXPECT_EQ(c.source, PoseSource::Corrected);
}

TEST(GpsCorrect, TightFixSnaps) {
  const auto c = gps_correct(pose(10, 1, 2, 0.5), {10, 50, 60, 1e-3}, 1e3, 0.05);
  EXPECT_NEAR(c.x, 50, 1e-9);
  EXPECT_NEAR(c.y, 60, 1e-9);
  EXPECT_EQ(c.theta, 0.5);
}

TEST(GpsCorrect, GainMatchesVarianceRatio) {
  const auto c = gps_correct(pose(0, 0, 0, 0), {0, 10, 0, 1}, 1, 0.05);
  EXPECT_DOUBLE_EQ(c.x, 5);
}

TEST(GpsCorrect, StaleFixRejected) {
  EXPECT_EQ(error_of([] { gps_correct(pose(0, 0, 0, 0), {100'000'000, 1, 1, 1}, 1, 0.05); }), Errc::StaleGps);
  EXPECT_EQ(error_of([] { gps_correct(pose(0, 0, 0, 0), {0, 1, 1, 0}, 1, 0.05); }), Errc::InvalidArgument);
}

TEST(Fusion, CorrectionBeatsDeadReckoning) {
  const auto drive = simulate_drive();
  const auto start = drive.truth.front();
  FusionParams with, without;
  without.use_gps = false;
  const auto fused = fuse(drive.odom, drive.imu, drive.gps, start, with);
  const auto dead = fuse(drive.odom, drive.imu, drive.gps, start, without);
  ASSERT_EQ(fused.size(), drive.truth.size());
  const double rms_fused = position_rms(fused, drive.truth);
  const double rms_dead = position_rms(dead, drive.truth);
  EXPECT_LT(rms_fused, rms_dead);
  RecordProperty("rms_fused", std::to_string(rms_fused));
  RecordProperty("rms_dead", std::to_string(rms_dead));
  EXPECT_TRUE(std::any_of(fused.begin(), fused.end(), [](auto& p) { return p.source == PoseSource::Corrected; }));
  for (std::size_t i = 1; i < fused.size(); ++i) ASSERT_GT(fused[i].t, fused[i - 1].t);
}

TEST(Fusion, MissingImuSampleIsTimeAlignment) {
  auto drive = simulate_drive({.duration_s = 2});
  drive.imu.erase(drive.imu.begin() + 5);
  EXPECT_EQ(error_of([&] { fuse(drive.odom, drive.imu, drive.gps, drive.truth.front()); }), Errc::TimeAlignment);
}

// ---- ICP

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int c = 0; c < 50; ++c) {
    std::uniform_int_distribution<int> n_pts(1, 200);
    const auto cloud = positions(random_cloud(rng, static_cast<std::size_t>(n_pts(rng))));
    std::vector<Eigen::Vector3d> pts = cloud;
    if (c % 5 == 0 && pts.size() > 3) pts[2] = pts[1];  // duplicate: tie resolves to the lower index
    const KdTree tree(pts);
    const auto queries = positions(random_cloud(rng, 100));
    for (const auto& q : queries) {
      const auto a = tree.nearest(q), b = brute_force_nearest(pts, q);
      ASSERT_EQ(a.index, b.index);
      ASSERT_EQ(a.dist2, b.dist2);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto a = tree.nearest(pts[i]), b = brute_force_nearest(pts, pts[i]);
      ASSERT_EQ(a.index, b.index);
      ASSERT_EQ(a.dist2, 0);
    }
  }
}

TEST(Icp, IdenticalScansGiveIdentity) {
  std::mt19937_64 rng(1);
  const auto s = random_cloud(rng, 300);
  const auto r = icp_align(s, s, RigidTransform::identity());
  EXPECT_LT(r.transform.angle(), 1e-12);
  EXPECT_LT(r.transform.translation.norm(), 1e-12);
  EXPECT_EQ(r.residual, 0);
}

TEST(Icp, RecoversPlantedTransform) {
  std::mt19937_64 rng(2);
  const auto src = random_cloud(rng, 500);
  const auto truth = planted(5 * kDeg, 0, 0.3, -0.2, 0);
  IcpParams p;
  p.max_correspondence_distance = 100;
  const auto r = icp_align(src, apply(truth, src), RigidTransform::identity(), p);
  EXPECT_LT(rot_error(r.transform, truth), 1e-3);
  EXPECT_LT(trans_error(r.transform, truth), 1e-3);
  EXPECT_LT(r.residual, 1e-6);
}

TEST(Icp, RandomPlantedCasesAndInvariants) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-10 * kDeg, 10 * kDeg), u(-1, 1);
  IcpParams p;
  p.max_correspondence_distance = 100;
  p.max_iterations = 100;
  for (int c = 0; c < 100; ++c) {
    const auto src = random_cloud(rng, 500);
    Eigen::Vector3d dir(u(rng), u(rng), u(rng));
    const double len = 0.5 * std::abs(u(rng));
    dir = dir.normalized() * len;
    const auto truth = planted(ang(rng), ang(rng) / 4, dir.x(), dir.y(), dir.z());
    ASSERT_LE(truth.angle(), 10 * kDeg + 1e-12);
    const auto r = icp_align(src, apply(truth, src), RigidTransform::identity(), p);
    ASSERT_LT(rot_error(r.transform, truth), 1e-3) << "case " << c;
    ASSERT_LT(trans_error(r.transform, truth), 1e-3) << "case " << c;
    ASSERT_TRUE(r.transform.is_valid(1e-9));
    for (std::size_t i = 1; i < r.residual_history.size(); ++i) {
      ASSERT_LE(r.residual_history[i], r.residual_history[i - 1]) << "case " << c << " iter " << i;
    }
  }
}

TEST(Icp, ResidualMonotoneWithTruncation) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0, 0.02);
  for (int c = 0; c < 20; ++c) {
    const auto src = random_cloud(rng, 400);
    auto dst = apply(planted(3 * kDeg, 0, 0.1, 0.05, 0), src);
    for (auto& q : dst.points) q.x += noise(rng), q.y += noise(rng), q.z += noise(rng);
    IcpParams p;
    p.max_correspondence_distance = 0.5;
    const auto r = icp_align(src, dst, RigidTransform::identity(), p);
    for (std::size_t i = 1; i < r.residual_history.size(); ++i) {
      ASSERT_LE(r.residual_history[i], r.residual_history[i - 1]);
    }
  }
}

// Noise on target points only: centroid error ~ sigma*sqrt(3/N), rotation
// error ~ sigma / (sqrt(N) * rms radius).
TEST(Icp, NoisyRecoveryWithinNoiseModel) {
  const double sigma = 0.01;
  const std::size_t n = 500;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0, sigma);
  IcpParams p;
  p.max_correspondence_distance = 100;
  for (int c = 0; c < 20; ++c) {
    const auto src = random_cloud(rng, n);
    const auto truth = planted(6 * kDeg, 1 * kDeg, 0.2, -0.3, 0.1);
    auto dst = apply(truth, src);
    for (auto& q : dst.points) q.x += noise(rng), q.y += noise(rng), q.z += noise(rng);
    double r2 = 0;
    const auto pts = positions(src);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& q : pts) mean += q;
    mean /= static_cast<double>(n);
    for (const auto& q : pts) r2 += (q - mean).squaredNorm();
    const double rms_radius = std::sqrt(r2 / static_cast<double>(n));
    const double tol_rot = 3 * sigma * std::sqrt(3.0) / (std::sqrt(double(n)) * rms_radius);
    const double tol_trans = 3 * sigma * std::sqrt(3.0 / double(n)) + tol_rot * mean.norm() + tol_rot * 5;
    const auto r = icp_align(src, dst, RigidTransform::identity(), p);
    EXPECT_LT(rot_error(r.transform, truth), tol_rot) << "case " << c;
    EXPECT_LT(trans_error(r.transform, truth), tol_trans) << "case " << c;
  }
}

TEST(Icp, CollinearPointsAreDegenerate) {
  LidarScan s{0, {{0, 0, 0, 0.5}, {1, 0, 0, 0.5}}};
  IcpParams p;
  p.max_correspondence_distance = 10;
  EXPECT_EQ(error_of([&] { icp_align(s, s, RigidTransform::identity(), p); }), Errc::DegenerateGeometry);
  LidarScan line{0, {}};
  for (int i = 0; i < 10; ++i) line.points.push_back({double(i), 0, 0, 0.5});
  EXPECT_EQ(error_of([&] { icp_align(line, line, RigidTransform::identity(), p); }), Errc::DegenerateGeometry);
  std::vector<Eigen::Vector3d> two{{0, 0, 0}, {1, 0, 0}};
  EXPECT_EQ(error_of([&] { kabsch(two, two); }), Errc::DegenerateGeometry);
}

TEST(Icp, FarApartScansHaveNoCorrespondences) {
  std::mt19937_64 rng(6);
  const auto s = random_cloud(rng, 100);
  const auto far = apply(planted(0, 0, 100, 0, 0), s);
  EXPECT_EQ(error_of([&] { icp_align(s, far, RigidTransform::identity()); }), Errc::NoCorrespondences);
  EXPECT_EQ(error_of([&] { icp_align(LidarScan{}, s, RigidTransform::identity()); }), Errc::InvalidArgument);
}

// ---- stitch

TEST(Stitch, SingleScanUnchanged) {
  std::mt19937_64 rng(7);
  auto s = random_cloud(rng, 50);
  s.t = 5;
  const auto out = stitch({s}, {pose(5, 1, 2, 0.25)});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].pose.source, PoseSource::IcpRefined);
  EXPECT_NEAR(out[0].pose.x, 1, 1e-12);
  EXPECT_NEAR(out[0].pose.y, 2, 1e-12);
  EXPECT_NEAR(out[0].pose.theta, 0.25, 1e-12);
}

TEST(Stitch, RefinesOdometryRelativePose) {
  const auto drive = simulate_drive({.duration_s = 4});
  const auto dead = fuse(drive.odom, drive.imu, {}, drive.truth.front(), {.use_gps = false});
  std::map<std::int64_t, PoseEstimate> at;
  for (const auto& p : dead) at[p.t] = p;
  for (std::size_t i = 0; i + 1 < drive.scans.size(); ++i) {
    const std::vector<LidarScan> pair{drive.scans[i], drive.scans[i + 1]};
    const std::vector<PoseEstimate> odo{at.at(pair[0].t), at.at(pair[1].t)};
    const auto out = stitch(pair, odo);
    const auto truth_rel = relative_seed(drive.scan_truth[i], drive.scan_truth[i + 1]);
    const auto odo_rel = relative_seed(odo[0], odo[1]);
    const auto icp_rel = out[0].transform.inverse().compose(out[1].transform);
    const double e_odo = trans_error(odo_rel, truth_rel) + rot_error(odo_rel, truth_rel);
    const double e_icp = trans_error(icp_rel, truth_rel) + rot_error(icp_rel, truth_rel);
    EXPECT_LT(e_icp, e_odo) << "pair " << i;
  }
}

TEST(Stitch, ShuffledScansRejected) {
  const auto drive = simulate_drive({.duration_s = 2});
  auto scans = drive.scans;
  auto poses = drive.scan_truth;
  std::swap(scans[0], scans[2]);
  EXPECT_EQ(error_of([&] { stitch(scans, poses); }), Errc::TimeAlignment);
  EXPECT_EQ(error_of([&] { stitch(drive.scans, {drive.scan_truth.begin(), drive.scan_truth.end() - 1}); }),
            Errc::TimeAlignment);
}

// ---- grid

TEST(Raster, SinglePointAtOrigin) {
  const auto m = rasterize({LidarScan{0, {{0, 0, 1.25, 0.7}}}});
  EXPECT_EQ(m.width, 1u);
  EXPECT_EQ(m.height, 1u);
  EXPECT_EQ(m.hits[0], 1u);
  EXPECT_EQ(m.elevation[0], 1.25);
  EXPECT_EQ(m.reflectance[0], 0.7);
  EXPECT_EQ(m.cell_size, 0.05);
}

TEST(Raster, MeanReflectanceMaxElevation) {
  const auto m = rasterize({LidarScan{0, {{0.01, 0.01, 0.5, 0.2}, {0.02, 0.03, 0.9, 0.4}}}});
  ASSERT_EQ(m.hits.size(), 1u);
  EXPECT_EQ(m.hits[0], 2u);
  EXPECT_NEAR(m.reflectance[0], 0.3, 1e-12);
  EXPECT_EQ(m.elevation[0], 0.9);
}

TEST(Raster, EmptyCellsAreNaNAndEmptyInputFails) {
  const auto m = rasterize({LidarScan{0, {{0.01, 0.01, 0.5, 0.2}, {0.22, 0.01, 0.9, 0.4}}}});
  EXPECT_EQ(m.width, 5u);
  EXPECT_TRUE(std::isnan(m.elevation[1]));
  EXPECT_TRUE(std::isnan(m.reflectance[1]));
  EXPECT_EQ(m.hits[1], 0u);
  EXPECT_EQ(error_of([] { rasterize({LidarScan{}}); }), Errc::EmptyInput);
  EXPECT_EQ(error_of([] { rasterize({LidarScan{0, {{0, 0, 0, 0}}}}, 0); }), Errc::InvalidArgument);
}

// Reflectances on a 2^-20 lattice make every summation order exact, so a
// plain sequential loop is a bit-exact oracle.
TEST(Raster, PartitionedMatchesSequentialReference) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ux(-3, 3), uz(-2, 2);
  std::uniform_int_distribution<int> ur(0, 1 << 20);
  std::vector<LidarPoint> pts;
  for (int i = 0; i < 100'000; ++i) pts.push_back({ux(rng), ux(rng), uz(rng), ur(rng) / double(1 << 20)});

  struct Ref {
    std::uint32_t n = 0;
    double zmax = -1e300, sum = 0;
  };
  std::map<std::pair<std::int64_t, std::int64_t>, Ref> ref;
  for (const auto& p : pts) {
    auto& r = ref[{static_cast<std::int64_t>(std::floor(p.x / 0.05)), static_cast<std::int64_t>(std::floor(p.y / 0.05))}];
    ++r.n;
    r.zmax = std::max(r.zmax, p.z);
    r.sum += p.reflectance;
  }

  RasterPartial merged;
  for (std::size_t part = 0; part < 7; ++part) {
    RasterPartial local;
    for (std::size_t i = part; i < pts.size(); i += 7) local.add(pts[i]);
    merged.merge(RasterPartial::from_records(local.to_records(), 0.05));
  }
  const auto m = merged.finalize();
  std::size_t occupied = 0;
  for (std::uint32_t r = 0; r < m.height; ++r) {
    for (std::uint32_t c = 0; c < m.width; ++c) {
      const auto i = m.index(c, r);
      auto it = ref.find({m.first_ix + c, m.first_iy + r});
      if (it == ref.end()) {
        ASSERT_EQ(m.hits[i], 0u);
        continue;
      }
      ++occupied;
      ASSERT_EQ(m.hits[i], it->second.n);
      ASSERT_EQ(m.elevation[i], it->second.zmax);
      ASSERT_EQ(m.reflectance[i], it->second.sum / it->second.n);
    }
  }
  EXPECT_EQ(occupied, ref.size());
}

TEST(Raster, OrderIndependent) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1), ur(0, 1);
  std::vector<LidarPoint> pts;
  for (int i = 0; i < 20'000; ++i) pts.push_back({u(rng), u(rng), u(rng), ur(rng)});
  const auto a = encode_map(rasterize({LidarScan{0, pts}}));
  std::shuffle(pts.begin(), pts.end(), rng);
  RasterPartial x, y;
  x.add(std::vector<LidarPoint>(pts.begin(), pts.begin() + 5000));
  y.add(std::vector<LidarPoint>(pts.begin() + 5000, pts.end()));
  y.merge(x);
  EXPECT_EQ(encode_map(y.finalize()), a);
}

namespace {

GridMap unit_grid() {  // 20 x 20 cells of 5 cm, lattice-anchored at (0, 0)
  LidarScan s{0, {}};
  for (int r = 0; r < 20; ++r) {
    for (int c = 0; c < 20; ++c) s.points.push_back({(c + 0.5) * 0.05, (r + 0.5) * 0.05, 0, 0.5});
  }
  return rasterize({s});
}

}  // namespace

TEST(Labels, EmptySpecIsNoOp) {
  const auto m = unit_grid();
  EXPECT_EQ(encode_map(add_labels(m, parse_label_spec(nlohmann::json::object()))), encode_map(m));
}

TEST(Labels, StraightLaneMatchesHandEnumeration) {
  const auto m = unit_grid();
  ASSERT_EQ(m.width, 20u);
  ASSERT_EQ(m.origin_x, 0);
  const auto spec = parse_label_spec(
      nlohmann::json::parse(R"({"lanes": [{"id": 7, "width": 0.2, "polyline": [[0.2, 0.5], [0.8, 0.5]]}]})"));
  const auto out = add_labels(m, spec);
  // centres x in [0.2, 0.8] -> cols 4..15; |y - 0.5| <= 0.1 -> rows 8..11
  std::set<std::uint32_t> expected;
  for (std::uint32_t r = 8; r <= 11; ++r) {
    for (std::uint32_t c = 4; c <= 15; ++c) expected.insert(r * 20 + c);
  }
  std::set<std::uint32_t> got;
  for (const auto& [cell, labels] : out.semantic) {
    got.insert(cell);
    EXPECT_EQ(labels, (std::set<Label>{{LabelKind::Lane, 7, {}, 0}}));
  }
  EXPECT_EQ(got, expected);
  EXPECT_EQ(out.hits, m.hits);
}

TEST(Labels, SignsAndOutOfBounds) {
  const auto spec = parse_label_spec(nlohmann::json::parse(
      R"({"signs": [{"point": [0.51, 0.52], "kind": "speed_limit", "value": 30},
                    {"point": [5, 5], "kind": "stop"}]})"));
  const auto out = add_labels(unit_grid(), spec);
  ASSERT_EQ(out.semantic.size(), 1u);
  const auto& [cell, labels] = *out.semantic.begin();
  EXPECT_EQ(cell, 10u * 20 + 10);
  EXPECT_TRUE(labels.count({LabelKind::TrafficSign, 0, "speed_limit", 0}));
  EXPECT_TRUE(labels.count({LabelKind::SpeedLimit, 0, {}, 30}));
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_NE(out.warnings[0].find("stop"), std::string::npos);
}

TEST(Labels, ReferenceLineIsOneCellWide) {
  const auto spec =
      parse_label_spec(nlohmann::json::parse(R"({"reference_lines": [{"polyline": [[0.0, 0.51], [1.0, 0.51]]}]})"));
  const auto out = add_labels(unit_grid(), spec);
  EXPECT_EQ(out.semantic.size(), 20u);
  for (const auto& [cell, labels] : out.semantic) EXPECT_EQ(cell / 20, 10u);
}

TEST(Labels, MalformedSpecs) {
  for (const char* bad : {R"([])", R"({"lanes": 3})", R"({"lanes": [{"id": 1, "width": 0.2}]})",
                          R"({"lanes": [{"id": 1, "width": -1, "polyline": [[0,0],[1,1]]}]})",
                          R"({"lanes": [{"id": "a", "width": 1, "polyline": [[0,0],[1,1]]}]})",
                          R"({"lanes": [{"id": 1, "width": 1, "polyline": [[0,0]]}]})",
                          R"({"signs": [{"point": [0], "kind": "stop"}]})",
                          R"({"signs": [{"point": [0, 0], "kind": "speed_limit"}]})", R"({"roads": []})"}) {
    EXPECT_EQ(error_of([&] { parse_label_spec(nlohmann::json::parse(bad)); }), Errc::MalformedLabelSpec) << bad;
  }
}

TEST(MapFile, RoundTripAndTruncation) {
  auto spec = parse_label_spec(nlohmann::json::parse(
      R"({"lanes": [{"id": 2, "width": 0.1, "polyline": [[0, 0.3], [1, 0.3]]}],
          "signs": [{"point": [0.51, 0.52], "kind": "speed_limit", "value": 12.5}]})"));
  auto m = add_labels(rasterize({LidarScan{0, {{0.01, 0.01, 0.5, 0.2}, {0.96, 0.71, -0.1, 0.9}}}}), spec);
  const auto bytes = encode_map(m);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ADHM");
  EXPECT_EQ(binstream::get_u32(bytes.data() + 4), 1u);
  const auto hlen = binstream::get_u32(bytes.data() + 8);
  const auto header = nlohmann::json::parse(std::string(bytes.begin() + 12, bytes.begin() + 12 + hlen));
  EXPECT_EQ(header.at("cell_size").get<double>(), 0.05);
  const auto back = decode_map(bytes);
  EXPECT_EQ(back.semantic, m.semantic);
  EXPECT_EQ(back.hits, m.hits);
  EXPECT_EQ(encode_map(back), bytes);
  for (std::size_t cut : {std::size_t{0}, std::size_t{6}, std::size_t{12 + hlen}, bytes.size() - 1}) {
    EXPECT_EQ(error_of([&] { decode_map(Bytes(bytes.begin(), bytes.begin() + cut)); }), Errc::ParseError) << cut;
  }
}

// ---- end to end

namespace {

std::unique_ptr<engine::Cluster> cluster(int workers) {
  engine::ClusterConfig c;
  c.workers = workers;
  c.slots.cpu = 2;
  return engine::Cluster::start(c);
}

MapConfig config_for(const DriveFiles& f, bool pipelined) {
  MapConfig cfg;
  cfg.odom_bag = f.odom;
  cfg.imu_bag = f.imu;
  cfg.gps_bag = f.gps;
  cfg.lidar_bag = f.lidar;
  cfg.labels = f.labels;
  cfg.pipelined = pipelined;
  return cfg;
}

}  // namespace

TEST(Pipeline, PipelinedAndStagedProduceIdenticalMaps) {
  TempDir dir("mapgen");
  const auto drive = simulate_drive();
  const auto files = write_drive(drive, dir.path());
  auto c = cluster(2);
  auto pcfg = config_for(files, true);
  pcfg.out = dir / "pipelined.adhm";
  const auto piped = run_map_pipeline(*c, pcfg);
  auto scfg = config_for(files, false);
  scfg.out = dir / "staged.adhm";
  const auto staged = run_map_pipeline(*c, scfg);

  EXPECT_EQ(piped.map_bytes, staged.map_bytes);
  EXPECT_EQ(binstream::read_file(dir / "pipelined.adhm"), binstream::read_file(dir / "staged.adhm"));
  EXPECT_LT(piped.bytes_persisted, staged.bytes_persisted);
  EXPECT_EQ(piped.map.cell_size, 0.05);
  EXPECT_EQ(map_header(read_map_file(dir / "pipelined.adhm")).at("cell_size").get<double>(), 0.05);
  EXPECT_EQ(piped.refined.size(), drive.scans.size());
  EXPECT_GT(piped.map.semantic.size(), 0u);
  EXPECT_EQ(piped.warnings.size(), 1u);  // the deliberately far-away stop sign

  const auto dead = fuse(drive.odom, drive.imu, drive.gps, drive.truth.front(), {.use_gps = false});
  EXPECT_LT(position_rms(piped.fused, drive.truth), position_rms(dead, drive.truth));

  // refined scan poses stay close to the truth
  EXPECT_LT(position_rms(piped.refined, drive.scan_truth), position_rms(dead, drive.truth));
}

TEST(Pipeline, WorkerCountDoesNotChangeMap) {
  TempDir dir("mapgen");
  const auto files = write_drive(simulate_drive({.duration_s = 6}), dir.path());
  auto one = cluster(1);
  const auto a = run_map_pipeline(*one, config_for(files, true));
  one->shutdown();
  auto three = cluster(3);
  auto cfg = config_for(files, true);
  const auto b = run_map_pipeline(*three, cfg);
  EXPECT_EQ(a.map_bytes, b.map_bytes);
}

TEST(Pipeline, EmptyLidarFailsAtStitch) {
  TempDir dir("mapgen");
  auto files = write_drive(simulate_drive({.duration_s = 2}), dir.path());
  binstream::write_bag_file(files.lidar, std::vector<binstream::BinaryRecord>{});
  auto c = cluster(1);
  EXPECT_EQ(error_of([&] { run_map_pipeline(*c, config_for(files, true)); }), Errc::EmptyInput);
}

TEST(Pipeline, ScanWithoutPoseIsTimeAlignment) {
  TempDir dir("mapgen");
  auto drive = simulate_drive({.duration_s = 2});
  drive.scans[1].t += 1;
  const auto files = write_drive(drive, dir.path());
  auto c = cluster(1);
  EXPECT_EQ(error_of([&] { run_map_pipeline(*c, config_for(files, true)); }), Errc::TimeAlignment);
}

int main(int argc, char** argv) {
  register_map_ops();
  if (auto rc = engine::run_worker_if_requested(argc, argv)) return *rc;
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
