#include "adcloud/mapgen/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include "adcloud/binstream/bag_format.hpp"
#include "adcloud/error.hpp"
#include "adcloud/mapgen/stitch.hpp"
#include "adcloud/simharness/simharness.hpp"

namespace adcloud::mapgen {

using binstream::FieldValue;
using engine::OpKind;
using engine::TaskContext;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Broadcast tables: u64 timestamp followed by a fixed number of f64s.
Bytes pack_table(const std::vector<std::pair<std::int64_t, std::vector<double>>>& rows) {
  Bytes out;
  for (const auto& [t, v] : rows) {
    binstream::put_u64(out, static_cast<std::uint64_t>(t));
    for (double d : v) binstream::put_f64(out, d);
  }
  return out;
}

std::map<std::int64_t, std::vector<double>> unpack_table(const Bytes& b, std::size_t width) {
  const std::size_t row = 8 + 8 * width;
  if (b.size() % row != 0) throw Error(Errc::ParseError, "broadcast table size");
  std::map<std::int64_t, std::vector<double>> out;
  for (std::size_t i = 0; i < b.size(); i += row) {
    std::vector<double> v(width);
    for (std::size_t k = 0; k < width; ++k) v[k] = binstream::get_f64(b.data() + i + 8 + 8 * k);
    out[static_cast<std::int64_t>(binstream::get_u64(b.data() + i))] = std::move(v);
  }
  return out;
}

struct LoadedScan {
  LidarScan scan;
  bool context = false;
};

LoadedScan scan_from_record(const BinaryRecord& r) {
  if (r.size() != 3) throw Error(Errc::ParseError, "lidar record needs 3 fields");
  return {{r[0].as_int64(), decode_points(r[1].as_bytes())}, r[2].as_int64() != 0};
}

std::vector<BinaryRecord> op_load(TaskContext& ctx, std::vector<BinaryRecord> in) {
  const std::string kind = ctx.config()[0].as_utf8();
  std::vector<BinaryRecord> out;
  out.reserve(in.size());
  if (kind == "lidar") {
    for (const auto& r : in) {
      const auto s = scan_from_record(r);  // validates and clamps reflectance
      out.push_back({FieldValue::int64(s.scan.t), FieldValue::bytes(encode_points(s.scan.points)),
                     FieldValue::int64(s.context ? 1 : 0)});
    }
    return out;
  }
  // nav: [topic, t, payload] -> [topic, t, f64...]
  for (const auto& raw : in) {
    const auto r = sim::BagRecord::from_record(raw);
    std::size_t n = r.topic == "odom" || r.topic == "imu" ? 1 : r.topic == "gps" ? 3 : 0;
    if (n == 0) throw Error(Errc::ParseError, "unexpected topic " + r.topic);
    BinaryRecord o{FieldValue::utf8(r.topic), FieldValue::int64(r.timestamp_ns)};
    for (double v : decode_f64s(r.payload, n)) o.fields.push_back(FieldValue::float64(v));
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<BinaryRecord> op_fuse(TaskContext& ctx, std::vector<BinaryRecord> in) {
  const auto& c = ctx.config();
  PoseEstimate initial{0, c[0].as_float64(), c[1].as_float64(), c[2].as_float64(), PoseSource::Propagated};
  FusionParams p;
  p.gps_window_s = c[3].as_float64();
  p.sigma_initial = c[4].as_float64();
  p.drift_per_meter = c[5].as_float64();
  p.use_gps = c[6].as_int64() != 0;
  std::vector<OdomSample> odom;
  std::vector<ImuSample> imu;
  std::vector<GpsSample> gps;
  for (const auto& r : in) {
    const auto& topic = r[0].as_utf8();
    const auto t = r[1].as_int64();
    if (topic == "odom") odom.push_back({t, r[2].as_float64()});
    else if (topic == "imu") imu.push_back({t, r[2].as_float64()});
    else gps.push_back({t, r[2].as_float64(), r[3].as_float64(), r[4].as_float64()});
  }
  std::vector<BinaryRecord> out;
  for (const auto& pose : fuse(odom, imu, gps, initial, p)) out.push_back(pose_to_record(pose));
  return out;
}

std::vector<BinaryRecord> op_align(TaskContext& ctx, std::vector<BinaryRecord> in) {
  const auto& c = ctx.config();
  const auto poses = unpack_table(c[0].as_bytes(), 3);
  IcpParams params;
  params.max_correspondence_distance = c[1].as_float64();
  params.epsilon = c[2].as_float64();
  params.max_iterations = static_cast<int>(c[3].as_int64());
  auto pose_at = [&](std::int64_t t) {
    auto it = poses.find(t);
    if (it == poses.end()) throw Error(Errc::TimeAlignment, "no fused pose at scan time " + std::to_string(t));
    return PoseEstimate{t, it->second[0], it->second[1], it->second[2], PoseSource::Corrected};
  };
  std::vector<BinaryRecord> out;
  std::optional<LidarScan> prev;
  for (const auto& r : in) {
    auto cur = scan_from_record(r).scan;
    if (prev) {
      if (cur.t <= prev->t) throw Error(Errc::TimeAlignment, "scans out of order at " + std::to_string(cur.t));
      const auto res = icp_align(cur, *prev, relative_seed(pose_at(prev->t), pose_at(cur.t)), params);
      out.push_back({FieldValue::int64(prev->t), FieldValue::int64(cur.t), FieldValue::bytes(res.transform.pack()),
                     FieldValue::float64(res.residual), FieldValue::int64(res.iterations)});
    }
    prev = std::move(cur);
  }
  return out;
}

std::vector<BinaryRecord> op_raster(TaskContext& ctx, std::vector<BinaryRecord> in) {
  const auto& c = ctx.config();
  const auto transforms = unpack_table(c[1].as_bytes(), 12);
  RasterPartial acc(c[0].as_float64());
  for (const auto& r : in) {
    const auto s = scan_from_record(r);
    if (s.context) continue;
    auto it = transforms.find(s.scan.t);
    if (it == transforms.end()) throw Error(Errc::TimeAlignment, "no refined pose at " + std::to_string(s.scan.t));
    Bytes packed;
    for (double v : it->second) binstream::put_f64(packed, v);
    acc.add(to_world(s.scan, RigidTransform::unpack(packed)).points);
  }
  return acc.to_records();
}

// Re-raise the mapgen error carried inside a TaskFailed message.
[[noreturn]] void rethrow_cause(const Error& e) {
  const std::string what = e.what();
  for (auto code : {Errc::TimeAlignment, Errc::NoCorrespondences, Errc::DegenerateGeometry, Errc::StaleGps,
                    Errc::NonPositiveDt, Errc::ParseError, Errc::EmptyInput}) {
    if (what.find(std::string(errc_name(code)) + ":") != std::string::npos) throw Error(code, what, e.detail());
  }
  throw e;
}

std::vector<BinaryRecord> read_checked(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw Error(Errc::NotFound, "input log " + p.string());
  return sim::read_bag_checked(p);
}

}  // namespace

void register_map_ops(engine::OpRegistry& registry) {
  registry.register_op("map.load", OpKind::MapPartitions, op_load);
  registry.register_op("map.fuse", OpKind::MapPartitions, op_fuse);
  registry.register_op("map.align", OpKind::MapPartitions, op_align);
  registry.register_op("map.raster", OpKind::MapPartitions, op_raster);
}

MapResult run_map_pipeline(engine::Cluster& cluster, const MapConfig& cfg) {
  if (!(cfg.cell_size > 0)) throw Error(Errc::InvalidArgument, "cell_size must be > 0");
  MapResult result;
  const bool persist = !cfg.pipelined;

  auto run = [&](const std::string& name, engine::DatasetRef source, std::vector<engine::OpSpec> ops) {
    engine::StagePlan plan;
    plan.source = std::move(source);
    plan.ops = std::move(ops);
    plan.persist_output = persist;
    const auto t0 = Clock::now();
    engine::JobResult res;
    try {
      res = cluster.submit(plan);
    } catch (const Error& e) {
      if (e.code() != Errc::TaskFailed) throw;
      rethrow_cause(e);
    }
    result.stages.push_back({name, since(t0), res.metrics.bytes_persisted, res.metrics});
    result.bytes_persisted += res.metrics.bytes_persisted;
    return res.dataset;
  };
  auto driver_stage = [&](const std::string& name, Clock::time_point t0) {
    result.stages.push_back({name, since(t0), 0, std::nullopt});
  };

  // Ingest: navigation logs merged by time into one partition; scans split
  // into consecutive chunks, each led by its predecessor's last scan.
  auto t0 = Clock::now();
  std::vector<std::pair<std::pair<std::int64_t, int>, BinaryRecord>> nav;
  int order = 0;
  for (const auto* p : {&cfg.odom_bag, &cfg.imu_bag, &cfg.gps_bag}) {
    for (auto& r : read_checked(*p)) nav.push_back({{r[1].as_int64(), order}, std::move(r)});
    ++order;
  }
  std::stable_sort(nav.begin(), nav.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<BinaryRecord> nav_records;
  for (auto& [k, r] : nav) nav_records.push_back(std::move(r));

  const auto lidar = read_checked(cfg.lidar_bag);
  result.scans = lidar.size();
  const std::size_t parts = std::max<std::size_t>(1, std::min(cfg.lidar_partitions, lidar.size()));
  std::vector<std::vector<BinaryRecord>> lidar_parts(parts);
  for (std::size_t p = 0, begin = 0; p < parts; ++p) {
    const std::size_t end = begin + (lidar.size() - begin + (parts - p) - 1) / (parts - p);
    if (begin > 0) {
      const auto& ctx = lidar[begin - 1];
      lidar_parts[p].push_back({FieldValue::int64(ctx[1].as_int64()), ctx[2], FieldValue::int64(1)});
    }
    for (std::size_t i = begin; i < end; ++i) {
      lidar_parts[p].push_back({FieldValue::int64(lidar[i][1].as_int64()), lidar[i][2], FieldValue::int64(0)});
    }
    begin = end;
  }
  const auto nav_raw = cluster.create_dataset({nav_records});
  const auto lidar_raw = cluster.create_dataset(lidar_parts);
  driver_stage("ingest", t0);

  // load + fuse
  BinaryRecord fuse_cfg{FieldValue::float64(cfg.initial.x),          FieldValue::float64(cfg.initial.y),
                        FieldValue::float64(cfg.initial.theta),      FieldValue::float64(cfg.fusion.gps_window_s),
                        FieldValue::float64(cfg.fusion.sigma_initial), FieldValue::float64(cfg.fusion.drift_per_meter),
                        FieldValue::int64(cfg.fusion.use_gps ? 1 : 0)};
  engine::DatasetRef fused_ds;
  if (cfg.pipelined) {
    fused_ds = run("load+fuse", nav_raw,
                   {{"map.load", OpKind::MapPartitions, {FieldValue::utf8("nav")}},
                    {"map.fuse", OpKind::MapPartitions, fuse_cfg}});
  } else {
    const auto nav_loaded = run("load.nav", nav_raw, {{"map.load", OpKind::MapPartitions, {FieldValue::utf8("nav")}}});
    fused_ds = run("fuse", nav_loaded, {{"map.fuse", OpKind::MapPartitions, fuse_cfg}});
  }
  for (const auto& r : cluster.collect(fused_ds)) result.fused.push_back(pose_from_record(r));

  const auto scans_ds = run("load.lidar", lidar_raw, {{"map.load", OpKind::MapPartitions, {FieldValue::utf8("lidar")}}});
  if (lidar.empty()) throw Error(Errc::EmptyInput, "stitch: the LiDAR log has no scans");

  // stitch: pairwise ICP on workers, chain composition on the driver
  std::map<std::int64_t, PoseEstimate> fused_at;
  for (const auto& p : result.fused) fused_at[p.t] = p;
  std::vector<std::pair<std::int64_t, std::vector<double>>> seed_rows;
  std::vector<std::int64_t> scan_times;
  for (const auto& r : lidar) {
    const auto t = r[1].as_int64();
    auto it = fused_at.find(t);
    if (it == fused_at.end()) throw Error(Errc::TimeAlignment, "no fused pose at scan time " + std::to_string(t));
    scan_times.push_back(t);
    seed_rows.push_back({t, {it->second.x, it->second.y, it->second.theta}});
  }
  const auto aligned_ds =
      run("align", scans_ds,
          {{"map.align",
            OpKind::MapPartitions,
            {FieldValue::bytes(pack_table(seed_rows)), FieldValue::float64(cfg.icp.max_correspondence_distance),
             FieldValue::float64(cfg.icp.epsilon), FieldValue::int64(cfg.icp.max_iterations)}}});
  t0 = Clock::now();
  std::vector<RigidTransform> relative;
  for (const auto& r : cluster.collect(aligned_ds)) {
    const std::size_t i = relative.size();
    if (i + 1 >= scan_times.size() || r[0].as_int64() != scan_times[i] || r[1].as_int64() != scan_times[i + 1]) {
      throw Error(Errc::TimeAlignment, "alignment results do not chain consecutive scans");
    }
    relative.push_back(RigidTransform::unpack(r[2].as_bytes()));
  }
  if (relative.size() + 1 != scan_times.size()) throw Error(Errc::TimeAlignment, "missing alignment results");
  const auto chain = compose_chain(fused_at.at(scan_times.front()), relative);
  std::vector<std::pair<std::int64_t, std::vector<double>>> world_rows;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    result.refined.push_back(pose_from_transform(scan_times[i], chain[i]));
    const Bytes b = chain[i].pack();
    world_rows.push_back({scan_times[i], decode_f64s(b, 12)});
  }
  driver_stage("chain", t0);

  const auto raster_ds = run("rasterize", scans_ds,
                             {{"map.raster",
                               OpKind::MapPartitions,
                               {FieldValue::float64(cfg.cell_size), FieldValue::bytes(pack_table(world_rows))}}});
  t0 = Clock::now();
  RasterPartial merged(cfg.cell_size);
  for (const auto& part : cluster.collect_partitions(raster_ds)) {
    merged.merge(RasterPartial::from_records(part, cfg.cell_size));  // ascending partition order
  }
  result.map = merged.finalize();
  driver_stage("merge", t0);

  t0 = Clock::now();
  if (cfg.labels) result.map = add_labels(std::move(result.map), load_label_spec(*cfg.labels));
  result.warnings = result.map.warnings;
  result.map_bytes = encode_map(result.map);
  if (cfg.out) binstream::write_file(*cfg.out, result.map_bytes);
  driver_stage("label+write", t0);
  return result;
}

nlohmann::json to_json(const MapResult& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    nlohmann::json j{{"name", s.name}, {"seconds", s.seconds}, {"bytes_persisted", s.bytes_persisted}};
    if (s.job) j["job"] = engine::to_json(*s.job);
    stages.push_back(std::move(j));
  }
  return {{"header", map_header(r.map)},
          {"scans", r.scans},
          {"occupied_cells", r.map.occupied()},
          {"labeled_cells", r.map.semantic.size()},
          {"bytes_persisted", r.bytes_persisted},
          {"map_bytes", r.map_bytes.size()},
          {"warnings", r.warnings},
          {"stages", stages}};
}

}  // namespace adcloud::mapgen
