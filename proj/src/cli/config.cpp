#include "adcloud/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "adcloud/error.hpp"

namespace adcloud::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(Errc::ConfigError, (path.empty() ? "<root>" : path) + ": " + what);
}

// Walks one JSON object, remembering which keys were consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::int64_t integer(const std::string& key, std::int64_t def, std::int64_t min,
                       std::int64_t max = std::numeric_limits<std::int64_t>::max()) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number_integer()) fail(at(key), "expected an integer");
    if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(max)) {
      fail(at(key), "must be <= " + std::to_string(max));
    }
    const auto n = v->get<std::int64_t>();
    if (n < min) fail(at(key), "must be >= " + std::to_string(min));
    if (n > max) fail(at(key), "must be <= " + std::to_string(max));
    return n;
  }

  double number(const std::string& key, double def, double min, bool exclusive = false) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number()) fail(at(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) fail(at(key), "must be finite");
    if (exclusive ? !(d > min) : !(d >= min)) fail(at(key), std::string("must be ") + (exclusive ? "> " : ">= ") + json(min).dump());
    return d;
  }

  double any_number(const std::string& key, double def) {
    return number(key, def, -std::numeric_limits<double>::max());
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::optional<std::string> string(const std::string& key) {
    const json* v = get(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) fail(at(key), "expected a string");
    return v->get<std::string>();
  }

  std::string required_string(const std::string& key) {
    auto s = string(key);
    if (!s || s->empty()) fail(at(key), "required");
    return *s;
  }

  std::string choice(const std::string& key, const std::string& def, std::initializer_list<const char*> allowed) {
    const std::string s = string(key).value_or(def);
    for (const char* a : allowed) {
      if (s == a) return s;
    }
    std::string list;
    for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
    fail(at(key), "must be one of " + list);
  }

  Fields object(const std::string& key) {
    static const json kEmpty = json::object();
    const json* v = get(key);
    return Fields(v ? *v : kEmpty, at(key));
  }

  /// Throws on keys that were never asked for.
  void done() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(at(k), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string slot_name(engine::SlotKind k) { return k == engine::SlotKind::Cpu ? "cpu" : "accel"; }

std::string partitioner_name(engine::Partitioner::Kind k) {
  switch (k) {
    case engine::Partitioner::Kind::ByFile: return "by_file";
    case engine::Partitioner::Kind::ByRecordCount: return "by_record_count";
    case engine::Partitioner::Kind::ByTimeWindow: return "by_time_window";
  }
  return "?";
}

}  // namespace

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("", "cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail("", path.string() + " is not valid JSON");
  return j;
}

engine::ClusterConfig parse_cluster_config(const json& j) {
  Fields f(j, "");
  engine::ClusterConfig c;
  c.workers = static_cast<int>(f.integer("workers", 1, 1, 256));
  {
    Fields s = f.object("slots");
    c.slots.cpu = static_cast<int>(s.integer("cpu", 1, 1, 1024));
    c.slots.accel = static_cast<int>(s.integer("accel", 0, 0, 1024));
    s.done();
  }
  {
    Fields t = f.object("tiers");
    c.mem_capacity = static_cast<std::uint64_t>(t.integer("mem", static_cast<std::int64_t>(c.mem_capacity), 1));
    c.disk1_capacity = static_cast<std::uint64_t>(t.integer("disk1", static_cast<std::int64_t>(c.disk1_capacity), 1));
    c.disk2_capacity = static_cast<std::uint64_t>(t.integer("disk2", static_cast<std::int64_t>(c.disk2_capacity), 1));
    t.done();
  }
  c.state_dir = f.string("state_dir").value_or("");
  c.port = static_cast<std::uint16_t>(f.integer("port", 0, 0, 65535));
  c.max_retries = static_cast<int>(f.integer("max_retries", 1, 0, 16));
  f.done();
  return c;
}

json dump_cluster_config(const engine::ClusterConfig& c) {
  return {{"workers", c.workers},
          {"slots", {{"cpu", c.slots.cpu}, {"accel", c.slots.accel}}},
          {"tiers", {{"mem", c.mem_capacity}, {"disk1", c.disk1_capacity}, {"disk2", c.disk2_capacity}}},
          {"state_dir", c.state_dir.string()},
          {"port", c.port},
          {"max_retries", c.max_retries}};
}

TrainJobConfig parse_train_config(const json& j) {
  Fields f(j, "");
  TrainJobConfig c;
  const auto model = f.choice("model", "LINEAR_REGRESSION", {"LINEAR_REGRESSION", "LOGISTIC_REGRESSION"});
  c.train.model = trainer::parse_model(model);
  c.train.learning_rate = f.number("learning_rate", 0.1, 0, true);
  c.train.iterations = static_cast<int>(f.integer("iterations", 100, 1, 1'000'000));
  c.train.shards = static_cast<int>(f.integer("shards", 1, 1, 4096));
  c.train.seed = static_cast<std::uint64_t>(f.integer("seed", 0, 0));
  c.train.checkpoint_every = static_cast<int>(f.integer("checkpoint_every", 0, 0, 1'000'000));
  c.pipelined = f.boolean("pipelined", true);
  f.done();
  return c;
}

json dump_train_config(const TrainJobConfig& c) {
  return {{"model", trainer::to_string(c.train.model)},
          {"learning_rate", c.train.learning_rate},
          {"iterations", c.train.iterations},
          {"shards", c.train.shards},
          {"seed", c.train.seed},
          {"checkpoint_every", c.train.checkpoint_every},
          {"pipelined", c.pipelined}};
}

mapgen::MapConfig parse_map_config(const json& j) {
  Fields f(j, "");
  mapgen::MapConfig c;
  {
    Fields logs = f.object("logs");
    c.odom_bag = logs.required_string("odom");
    c.imu_bag = logs.required_string("imu");
    c.gps_bag = logs.required_string("gps");
    c.lidar_bag = logs.required_string("lidar");
    logs.done();
  }
  if (auto labels = f.string("labels")) c.labels = *labels;
  c.cell_size = f.number("cell_size", mapgen::kDefaultCellSize, 0, true);
  {
    Fields p = f.object("initial_pose");
    c.initial.x = p.any_number("x", 0);
    c.initial.y = p.any_number("y", 0);
    c.initial.theta = p.any_number("theta", 0);
    if (c.initial.theta <= -M_PI || c.initial.theta > M_PI) fail(p.at("theta"), "must be in (-pi, pi]");
    p.done();
  }
  {
    Fields fu = f.object("fusion");
    c.fusion.gps_window_s = fu.number("gps_window_s", c.fusion.gps_window_s, 0);
    c.fusion.sigma_initial = fu.number("sigma_initial", c.fusion.sigma_initial, 0, true);
    c.fusion.drift_per_meter = fu.number("drift_per_meter", c.fusion.drift_per_meter, 0);
    c.fusion.use_gps = fu.boolean("use_gps", true);
    fu.done();
  }
  {
    Fields i = f.object("icp");
    c.icp.max_iterations = static_cast<int>(i.integer("max_iterations", c.icp.max_iterations, 1, 10'000));
    c.icp.epsilon = i.number("epsilon", c.icp.epsilon, 0, true);
    c.icp.max_correspondence_distance =
        i.number("max_correspondence_distance", c.icp.max_correspondence_distance, 0, true);
    i.done();
  }
  c.lidar_partitions = static_cast<std::size_t>(f.integer("lidar_partitions", 4, 1, 4096));
  c.pipelined = f.choice("mode", "pipelined", {"pipelined", "staged"}) == "pipelined";
  f.done();
  return c;
}

json dump_map_config(const mapgen::MapConfig& c) {
  return {{"logs",
           {{"odom", c.odom_bag.string()},
            {"imu", c.imu_bag.string()},
            {"gps", c.gps_bag.string()},
            {"lidar", c.lidar_bag.string()}}},
          {"labels", c.labels ? json(c.labels->string()) : json(nullptr)},
          {"cell_size", c.cell_size},
          {"initial_pose", {{"x", c.initial.x}, {"y", c.initial.y}, {"theta", c.initial.theta}}},
          {"fusion",
           {{"gps_window_s", c.fusion.gps_window_s},
            {"sigma_initial", c.fusion.sigma_initial},
            {"drift_per_meter", c.fusion.drift_per_meter},
            {"use_gps", c.fusion.use_gps}}},
          {"icp",
           {{"max_iterations", c.icp.max_iterations},
            {"epsilon", c.icp.epsilon},
            {"max_correspondence_distance", c.icp.max_correspondence_distance}}},
          {"lidar_partitions", c.lidar_partitions},
          {"mode", c.pipelined ? "pipelined" : "staged"}};
}

void resolve_paths(mapgen::MapConfig& c, const std::filesystem::path& base) {
  auto fix = [&](std::filesystem::path& p) {
    if (p.is_relative()) p = base / p;
  };
  fix(c.odom_bag);
  fix(c.imu_bag);
  fix(c.gps_bag);
  fix(c.lidar_bag);
  if (c.labels) fix(*c.labels);
}

PlanFile parse_plan(const json& j) {
  Fields f(j, "");
  PlanFile p;
  {
    Fields s = f.object("source");
    p.glob = s.required_string("glob");
    Fields part = s.object("partitioner");
    const auto kind = part.choice("kind", "by_file", {"by_file", "by_record_count", "by_time_window"});
    if (kind == "by_file") {
      p.partitioner = engine::Partitioner::by_file();
    } else if (kind == "by_record_count") {
      p.partitioner = engine::Partitioner::by_record_count(static_cast<std::uint64_t>(part.integer("records", 1024, 1)));
    } else {
      p.partitioner = engine::Partitioner::by_time_window(part.number("seconds", 1, 0, true));
    }
    part.done();
    s.done();
  }
  const json* ops = f.get("ops");
  if (!ops || !ops->is_array() || ops->empty()) fail("ops", "expected a non-empty array");
  for (std::size_t i = 0; i < ops->size(); ++i) {
    Fields o((*ops)[i], "ops[" + std::to_string(i) + "]");
    engine::OpSpec spec;
    spec.name = o.required_string("name");
    spec.kind = engine::parse_op_kind(o.choice("kind", "MAP_PARTITIONS", {"MAP_PARTITIONS", "BRIDGE", "REDUCE"}));
    if (const json* cfg = o.get("config")) {
      try {
        spec.config = engine::record_from_json(*cfg);
      } catch (const Error& e) {
        fail(o.at("config"), e.what());
      }
    }
    o.done();
    p.ops.push_back(std::move(spec));
  }
  p.backend = f.choice("backend", "cpu", {"cpu", "accel"}) == "cpu" ? engine::SlotKind::Cpu : engine::SlotKind::Accel;
  p.persist_output = f.boolean("persist_output", true);
  p.output = f.string("output");
  f.done();
  return p;
}

json dump_plan(const PlanFile& p) {
  json part{{"kind", partitioner_name(p.partitioner.kind)}};
  if (p.partitioner.kind == engine::Partitioner::Kind::ByRecordCount) part["records"] = p.partitioner.records;
  if (p.partitioner.kind == engine::Partitioner::Kind::ByTimeWindow) part["seconds"] = p.partitioner.seconds;
  json ops = json::array();
  for (const auto& o : p.ops) {
    ops.push_back({{"name", o.name}, {"kind", engine::to_string(o.kind)}, {"config", engine::record_to_json(o.config)}});
  }
  return {{"source", {{"glob", p.glob}, {"partitioner", part}}},
          {"ops", ops},
          {"backend", slot_name(p.backend)},
          {"persist_output", p.persist_output},
          {"output", p.output ? json(*p.output) : json(nullptr)}};
}

json canonicalize(const std::string& kind, const json& j) {
  if (kind == "cluster") return dump_cluster_config(parse_cluster_config(j));
  if (kind == "train") return dump_train_config(parse_train_config(j));
  if (kind == "map") return dump_map_config(parse_map_config(j));
  if (kind == "plan") return dump_plan(parse_plan(j));
  fail("", "unknown config kind '" + kind + "'");
}

}  // namespace adcloud::cli
