#include "adcloud/cli/commands.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "adcloud/binstream/bag_format.hpp"
#include "adcloud/binstream/stream.hpp"
#include "adcloud/cli/config.hpp"
#include "adcloud/error.hpp"
#include "adcloud/mapgen/simulator.hpp"
#include "adcloud/simharness/simharness.hpp"
#include "adcloud/storage/backing_store.hpp"

namespace adcloud::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw Error(Errc::BackingIoError, "cannot write " + path.string());
}

void emit(bool as_json, const json& j, const std::string& human) {
  if (as_json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << human;
  }
}

// Cluster settings: saved by `cluster start`, overridable per command.
engine::ClusterConfig cluster_config(int workers_override) {
  const fs::path saved = adcloud_home() / "cluster.json";
  engine::ClusterConfig c = fs::exists(saved) ? parse_cluster_config(load_json(saved)) : engine::ClusterConfig{};
  if (workers_override > 0) c.workers = workers_override;
  if (c.state_dir.empty()) c.state_dir = adcloud_home() / "state";
  return c;
}

std::unique_ptr<engine::Cluster> start_cluster(int workers_override) {
  return engine::Cluster::start(cluster_config(workers_override));
}

std::string next_job_id() {
  const fs::path dir = adcloud_home() / "jobs";
  fs::create_directories(dir);
  const fs::path counter = dir / "COUNTER";
  std::uint64_t n = 0;
  if (std::ifstream in(counter); in) in >> n;
  ++n;
  std::ofstream(counter) << n << "\n";
  std::ostringstream id;
  id << "job-" << std::setw(4) << std::setfill('0') << n;
  return id.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

// "cpu=2,accel=1"
json parse_slots(const std::string& spec) {
  json slots = json::object();
  for (const auto& kv : split(spec, ',')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(Errc::ConfigError, "slots: expected kind=count, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    std::int64_t n = 0;
    try {
      std::size_t used = 0;
      n = std::stoll(kv.substr(eq + 1), &used);
      if (used != kv.size() - eq - 1) throw std::invalid_argument(kv);
    } catch (const std::exception&) {
      throw Error(Errc::ConfigError, "slots." + key + ": expected an integer");
    }
    slots[key] = n;
  }
  return slots;
}

std::string human_metrics(const engine::JobMetrics& m) {
  std::ostringstream o;
  o << m.job_id << ": " << m.tasks.size() << " task attempts on " << m.workers << " workers, " << m.wall_seconds
    << " s wall, " << m.bytes_persisted << " bytes persisted, " << m.retries << " retries\n";
  for (const auto& [op, s] : m.stage_seconds) o << "  " << op << ": " << s << " s\n";
  for (const auto& [tier, c] : m.storage.tiers) {
    o << "  " << tier << ": hits " << c.hits << " misses " << c.misses << " written " << c.bytes_written << " read "
      << c.bytes_read << "\n";
  }
  return o.str();
}

struct Common {
  bool json = false;
  int workers = 0;
};

void add_common(CLI::App* cmd, Common& c, bool with_workers = true) {
  cmd->add_flag("--json", c.json, "Emit machine-readable JSON");
  if (with_workers) cmd->add_option("--workers", c.workers, "Worker processes (overrides cluster.json)")->check(CLI::PositiveNumber);
}

// ---- cluster

int cluster_start(const Common& common, const std::string& config_path, const std::string& slots, std::int64_t mem,
                  std::int64_t disk1, std::int64_t disk2, int port, int retries) {
  json j = config_path.empty() ? json::object() : load_json(config_path);
  if (common.workers != 0) j["workers"] = common.workers;
  if (!slots.empty()) j["slots"] = parse_slots(slots);
  if (mem != 0) j["tiers"]["mem"] = mem;
  if (disk1 != 0) j["tiers"]["disk1"] = disk1;
  if (disk2 != 0) j["tiers"]["disk2"] = disk2;
  if (port >= 0) j["port"] = port;
  if (retries >= 0) j["max_retries"] = retries;
  auto cfg = parse_cluster_config(j);
  const json canonical = dump_cluster_config(cfg);

  if (cfg.state_dir.empty()) cfg.state_dir = adcloud_home() / "state";
  auto cluster = engine::Cluster::start(cfg);
  const int live = cluster->live_workers();
  cluster->shutdown();
  write_json(adcloud_home() / "cluster.json", canonical);
  const json out{{"status", live == cfg.workers ? "ready" : "degraded"},
                 {"live_workers", live},
                 {"home", adcloud_home().string()},
                 {"config", canonical}};
  emit(common.json, out,
       "cluster ready: " + std::to_string(live) + " workers (config saved to " +
           (adcloud_home() / "cluster.json").string() + ")\n");
  return live == cfg.workers ? kOk : kJobFailure;
}

// ---- jobs

int job_submit(const Common& common, const std::string& plan_path) {
  PlanFile plan = parse_plan(load_json(plan_path));
  fs::path glob = plan.glob;
  if (glob.is_relative()) glob = fs::absolute(plan_path).parent_path() / glob;
  const std::string id = next_job_id();

  auto cluster = start_cluster(common.workers);
  const auto input = cluster->ingest(glob.string(), plan.partitioner);
  engine::StagePlan stage{input, plan.ops, plan.backend, plan.persist_output};
  json record{{"job_id", id}, {"plan", dump_plan(plan)}};
  engine::JobResult res;
  try {
    res = cluster->submit(stage);
  } catch (const Error& e) {
    record["error"] = e.what();
    write_json(adcloud_home() / "jobs" / (id + ".json"), record);
    throw;
  }
  res.metrics.job_id = id;
  json output = nullptr;
  if (plan.output) {
    fs::path out = *plan.output;
    if (out.is_relative()) out = fs::absolute(plan_path).parent_path() / out;
    const auto records = cluster->collect(res.dataset);
    binstream::write_file(out, binstream::serialize_partition_bytes(records));
    output = out.string();
  }
  cluster->shutdown();

  record["dataset"] = {{"id", res.dataset.id}, {"num_partitions", res.dataset.num_partitions}};
  record["reduced"] = res.reduced ? engine::record_to_json(*res.reduced) : json(nullptr);
  record["output"] = output;
  record["metrics"] = engine::to_json(res.metrics);
  write_json(adcloud_home() / "jobs" / (id + ".json"), record);
  emit(common.json, record, "submitted " + id + "\n" + human_metrics(res.metrics));
  return kOk;
}

int job_metrics(const Common& common, const std::string& id) {
  const fs::path p = adcloud_home() / "jobs" / (id + ".json");
  if (!fs::exists(p)) throw Error(Errc::ConfigError, "job: unknown job id '" + id + "'");
  const json record = load_json(p);
  if (!record.contains("metrics")) {
    emit(common.json, {{"job_id", id}, {"error", record.value("error", "")}},
         id + " failed: " + record.value("error", "") + "\n");
    return kJobFailure;
  }
  std::ostringstream human;
  human << id << ": " << record["metrics"]["wall_seconds"].get<double>() << " s wall, "
        << record["metrics"]["bytes_persisted"].get<std::uint64_t>() << " bytes persisted\n";
  for (const auto& s : record["metrics"]["stage_seconds"]) {
    human << "  " << s["op"].get<std::string>() << ": " << s["seconds"].get<double>() << " s\n";
  }
  emit(common.json, record["metrics"], human.str());
  return kOk;
}

int storage_stats(const Common& common) {
  const auto cfg = cluster_config(0);
  const storage::BackingStore backing(cfg.state_dir / "backing");
  std::uint64_t blocks = 0, bytes = 0;
  for (const auto& [key, size] : backing.manifest()) {
    ++blocks;
    bytes += size;
  }
  json last = nullptr;
  const fs::path jobs = adcloud_home() / "jobs";
  if (fs::exists(jobs)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(jobs)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (auto it = files.rbegin(); it != files.rend(); ++it) {
      const json r = load_json(*it);
      if (r.contains("metrics")) {
        last = {{"job_id", r["job_id"]}, {"storage", r["metrics"]["storage"]}};
        break;
      }
    }
  }
  const json out{{"backing", {{"dir", backing.dir().string()}, {"blocks", blocks}, {"bytes", bytes}}},
                 {"last_job", last}};
  emit(common.json, out,
       "backing " + backing.dir().string() + ": " + std::to_string(blocks) + " blocks, " + std::to_string(bytes) +
           " bytes\n");
  return kOk;
}

// ---- sim

int sim_synth(const Common& common, const std::string& out, sim::SynthSpec spec, const std::string& topics) {
  if (!topics.empty()) spec.topics = split(topics, ',');
  if (spec.topics.empty()) throw Error(Errc::ConfigError, "topics: at least one topic required");
  if (!(spec.rate_hz > 0)) throw Error(Errc::ConfigError, "rate: must be > 0");
  if (!(spec.duration_s > 0)) throw Error(Errc::ConfigError, "duration: must be > 0");
  sim::synth_bag(spec, out);
  const json j{{"out", out}, {"records", sim::synth_records(spec).size()}, {"bytes", fs::file_size(out)}};
  emit(common.json, j, "wrote " + out + "\n");
  return kOk;
}

int sim_run(const Common& common, const std::string& bag, const std::string& algo,
            const std::vector<std::string>& algo_args, const std::string& golden, const std::string& report_path,
            std::uint64_t partition_records) {
  auto cluster = start_cluster(common.workers);
  const auto part = engine::Partitioner::by_record_count(partition_records);
  const auto ds = sim::load_bag(*cluster, bag, part);
  std::optional<engine::DatasetRef> gold;
  if (!golden.empty()) gold = sim::load_bag(*cluster, golden, part);
  const auto report = sim::replay(*cluster, ds, {fs::absolute(algo), algo_args}, gold);
  cluster->shutdown();
  const json j = sim::to_json(report);
  if (!report_path.empty()) write_json(report_path, j);
  emit(common.json, j,
       "replayed " + std::to_string(report.records_replayed) + " records, " + std::to_string(report.outputs_received) +
           " outputs, " + std::to_string(report.mismatches) + " mismatches in " + std::to_string(report.wall_seconds) +
           " s\n");
  return kOk;
}

// ---- training

std::vector<trainer::Sample> read_samples(const fs::path& p) {
  if (!fs::exists(p)) throw Error(Errc::ConfigError, "data: no such file " + p.string());
  std::vector<trainer::Sample> out;
  for (const auto& r : binstream::deserialize_partition_bytes(binstream::read_file(p))) {
    out.push_back(trainer::decode_sample(r));
  }
  return out;
}

int data_synth(const Common& common, const std::string& out, bool logistic, std::size_t n, double slope,
               double intercept, double noise, std::size_t features, std::uint64_t seed) {
  const auto samples =
      logistic ? trainer::synth_logistic(n, features, seed) : trainer::synth_linear(n, slope, intercept, noise, seed);
  std::vector<binstream::BinaryRecord> records;
  for (const auto& s : samples) records.push_back(trainer::encode_sample(s));
  binstream::write_file(out, binstream::serialize_partition_bytes(records));
  emit(common.json, {{"out", out}, {"samples", samples.size()}, {"dims", samples.empty() ? 0 : samples[0].x.size()}},
       "wrote " + std::to_string(samples.size()) + " samples to " + out + "\n");
  return kOk;
}

int train(const Common& common, const std::string& config_path, const std::string& data, const std::string& out,
          std::string loss_csv) {
  const auto cfg = parse_train_config(load_json(config_path));
  const auto samples = read_samples(data);
  if (samples.empty()) throw Error(Errc::EmptyInput, "data: no samples");
  auto cluster = start_cluster(common.workers);
  const auto ds = trainer::shard_dataset(*cluster, samples, cfg.train.shards);
  trainer::TrainOptions opts;
  opts.pipelined = cfg.pipelined;
  const auto res = trainer::train(*cluster, cfg.train, ds, samples[0].x.size(), opts);
  cluster->shutdown();

  if (loss_csv.empty()) loss_csv = fs::path(out).replace_extension(".loss.csv").string();
  {
    std::ofstream csv(loss_csv);
    csv << "iteration,mean_loss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < res.loss.size(); ++i) csv << i << "," << res.loss[i] << "\n";
  }
  const json j{{"model", trainer::to_string(cfg.train.model)},
               {"params", trainer::to_json(res.params)},
               {"final_loss", res.loss.empty() ? json(nullptr) : json(res.loss.back())},
               {"loss_csv", loss_csv},
               {"metrics", engine::to_json(res.metrics)}};
  write_json(out, j);
  std::ostringstream human;
  human << std::setprecision(17) << "trained " << cfg.train.iterations << " iterations; params";
  for (double v : res.params.values) human << " " << v;
  human << "\n";
  emit(common.json, j, human.str());
  return kOk;
}

// ---- maps

int map_synth(const Common& common, const std::string& out, double duration, std::uint64_t seed) {
  mapgen::DriveConfig dc;
  dc.duration_s = duration;
  dc.seed = seed;
  if (!(duration > 0)) throw Error(Errc::ConfigError, "duration: must be > 0");
  const auto drive = mapgen::simulate_drive(dc);
  const auto files = mapgen::write_drive(drive, out);
  json cfg{{"logs", {{"odom", "odom.bag"}, {"imu", "imu.bag"}, {"gps", "gps.bag"}, {"lidar", "lidar.bag"}}},
           {"labels", "labels.json"}};
  write_json(fs::path(out) / "map.json", canonicalize("map", cfg));
  json truth = json::array();
  for (const auto& p : drive.truth) truth.push_back({p.t, p.x, p.y, p.theta});
  write_json(fs::path(out) / "truth.json", truth);
  emit(common.json,
       {{"dir", out}, {"scans", drive.scans.size()}, {"odom_samples", drive.odom.size()}, {"config", (fs::path(out) / "map.json").string()}},
       "wrote a " + std::to_string(duration) + " s drive to " + out + "\n");
  return kOk;
}

int map_build(const Common& common, const std::string& config_path, const std::string& out, const std::string& mode,
              const std::string& metrics_path) {
  auto cfg = parse_map_config(load_json(config_path));
  resolve_paths(cfg, fs::absolute(config_path).parent_path());
  if (!mode.empty()) cfg.pipelined = mode == "pipelined";
  cfg.out = out;
  auto cluster = start_cluster(common.workers);
  const auto res = mapgen::run_map_pipeline(*cluster, cfg);
  cluster->shutdown();
  json j = mapgen::to_json(res);
  j["out"] = out;
  j["mode"] = cfg.pipelined ? "pipelined" : "staged";
  if (!metrics_path.empty()) write_json(metrics_path, j);
  std::ostringstream human;
  human << "wrote " << out << ": " << res.map.width << "x" << res.map.height << " cells of " << res.map.cell_size
        << " m, " << res.map.occupied() << " occupied, " << res.bytes_persisted << " bytes persisted\n";
  for (const auto& w : res.warnings) human << "warning: " << w << "\n";
  emit(common.json, j, human.str());
  return kOk;
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError:
    case Errc::InvalidPlan:
    case Errc::UnknownOp:
    case Errc::InvalidArgument:
    case Errc::MalformedLabelSpec:
      return kConfigError;
    default:
      return kJobFailure;
  }
}

}  // namespace

void register_all_ops() {
  engine::register_builtin_ops();
  sim::register_sim_ops();
  trainer::register_trainer_ops();
  mapgen::register_map_ops();
}

fs::path adcloud_home() {
  if (const char* h = std::getenv("ADCLOUD_HOME"); h && *h) return h;
  if (const char* h = std::getenv("HOME"); h && *h) return fs::path(h) / ".adcloud";
  return fs::current_path() / ".adcloud";
}

int run(int argc, char** argv) {
  CLI::App app{"adcloud: local autonomous-driving cloud (replay simulation, training, HD maps)", "adcloud"};
  app.require_subcommand(1);
  std::function<int()> action;

  Common common;

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Cluster configuration")->require_subcommand(1);
  auto* cstart = cluster->add_subcommand("start", "Validate a cluster config, bring the workers up once, save it");
  std::string cconfig, slots;
  std::int64_t mem = 0, disk1 = 0, disk2 = 0;
  int port = -1, retries = -1;
  add_common(cstart, common);
  cstart->add_option("--config", cconfig, "Cluster config JSON");
  cstart->add_option("--slots", slots, "Slots per worker, e.g. cpu=2,accel=1");
  cstart->add_option("--mem", mem, "MEM tier capacity (bytes)");
  cstart->add_option("--disk1", disk1, "DISK1 tier capacity (bytes)");
  cstart->add_option("--disk2", disk2, "DISK2 tier capacity (bytes)");
  cstart->add_option("--port", port, "Driver port (0 = ephemeral)");
  cstart->add_option("--max-retries", retries, "Task retries on another worker");
  cstart->callback([&] { action = [&] { return cluster_start(common, cconfig, slots, mem, disk1, disk2, port, retries); }; });

  // job
  auto* job = app.add_subcommand("job", "Run plans")->require_subcommand(1);
  auto* submit = job->add_subcommand("submit", "Ingest the plan source and run its ops");
  std::string plan_path, job_id;
  add_common(submit, common);
  submit->add_option("plan", plan_path, "Plan JSON")->required()->check(CLI::ExistingFile);
  submit->callback([&] { action = [&] { return job_submit(common, plan_path); }; });
  auto* metrics = job->add_subcommand("metrics", "Show the metrics of a finished job");
  add_common(metrics, common, false);
  metrics->add_option("id", job_id, "Job id")->required();
  metrics->callback([&] { action = [&] { return job_metrics(common, job_id); }; });

  // storage
  auto* storage_cmd = app.add_subcommand("storage", "Storage inspection")->require_subcommand(1);
  auto* stats = storage_cmd->add_subcommand("stats", "Backing-store contents and the last job's tier counters");
  add_common(stats, common, false);
  stats->callback([&] { action = [&] { return storage_stats(common); }; });

  // sim
  auto* simc = app.add_subcommand("sim", "Replay simulation")->require_subcommand(1);
  auto* run_cmd = simc->add_subcommand("run", "Replay a bag through an external algorithm");
  std::string bag, algo, golden, report;
  std::vector<std::string> algo_args;
  std::uint64_t part_records = 1024;
  add_common(run_cmd, common);
  run_cmd->add_option("--bag", bag, "Input bag")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--algo", algo, "Algorithm executable")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--algo-arg", algo_args, "Argument passed to the algorithm (repeatable)");
  run_cmd->add_option("--golden", golden, "Golden output bag")->check(CLI::ExistingFile);
  run_cmd->add_option("--report", report, "Write the report JSON here");
  run_cmd->add_option("--partition-records", part_records, "Records per partition")->check(CLI::PositiveNumber);
  run_cmd->callback([&] { action = [&] { return sim_run(common, bag, algo, algo_args, golden, report, part_records); }; });
  auto* synth = simc->add_subcommand("synth", "Write a deterministic synthetic bag");
  sim::SynthSpec spec;
  std::string synth_out, topics;
  add_common(synth, common, false);
  synth->add_option("--out", synth_out, "Output bag")->required();
  synth->add_option("--topics", topics, "Comma-separated topics");
  synth->add_option("--rate", spec.rate_hz, "Messages per second per topic");
  synth->add_option("--duration", spec.duration_s, "Seconds");
  synth->add_option("--payload", spec.payload_bytes, "Payload bytes");
  synth->add_option("--seed", spec.seed, "Seed");
  synth->callback([&] { action = [&] { return sim_synth(common, synth_out, spec, topics); }; });

  // train + data
  auto* tr = app.add_subcommand("train", "Distributed synchronous training");
  std::string tconfig, tdata, tout, tloss;
  add_common(tr, common);
  tr->add_option("--config", tconfig, "Train config JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--data", tdata, "Sample file (partition stream)")->required();
  tr->add_option("--out", tout, "Parameter JSON output")->required();
  tr->add_option("--loss-csv", tloss, "Loss curve CSV (default <out>.loss.csv)");
  tr->callback([&] { action = [&] { return train(common, tconfig, tdata, tout, tloss); }; });

  auto* data = app.add_subcommand("data", "Synthetic training data")->require_subcommand(1);
  std::string dout;
  std::size_t dn = 1000, dfeatures = 3;
  double slope = 2, intercept = 1, noise = 0;
  std::uint64_t dseed = 1;
  auto* lin = data->add_subcommand("synth-linear", "y = slope*x + intercept (+ noise); features [x, 1]");
  auto* logi = data->add_subcommand("synth-logistic", "Binary labels from a logistic model");
  for (auto* c : {lin, logi}) {
    add_common(c, common, false);
    c->add_option("--out", dout, "Output file")->required();
    c->add_option("--n", dn, "Samples")->check(CLI::PositiveNumber);
    c->add_option("--seed", dseed, "Seed");
  }
  lin->add_option("--slope", slope);
  lin->add_option("--intercept", intercept);
  lin->add_option("--noise", noise);
  logi->add_option("--features", dfeatures, "Feature count including the bias column")->check(CLI::PositiveNumber);
  lin->callback([&] { action = [&] { return data_synth(common, dout, false, dn, slope, intercept, noise, 0, dseed); }; });
  logi->callback([&] { action = [&] { return data_synth(common, dout, true, dn, 0, 0, 0, dfeatures, dseed); }; });

  // map
  auto* mapc = app.add_subcommand("map", "HD map generation")->require_subcommand(1);
  auto* build = mapc->add_subcommand("build", "Run the map pipeline");
  std::string mconfig, mout, mmode, mmetrics;
  add_common(build, common);
  build->add_option("--config", mconfig, "Map config JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--out", mout, "Map file")->required();
  build->add_option("--mode", mmode, "Override the config's mode")->check(CLI::IsMember({"pipelined", "staged"}));
  build->add_option("--metrics", mmetrics, "Write pipeline metrics JSON here");
  build->callback([&] { action = [&] { return map_build(common, mconfig, mout, mmode, mmetrics); }; });
  auto* msynth = mapc->add_subcommand("synth", "Simulate a drive: bags, labels, map.json");
  std::string msout;
  double mduration = 10;
  std::uint64_t mseed = 7;
  add_common(msynth, common, false);
  msynth->add_option("--out", msout, "Output directory")->required();
  msynth->add_option("--duration", mduration, "Seconds");
  msynth->add_option("--seed", mseed, "Seed");
  msynth->callback([&] { action = [&] { return map_synth(common, msout, mduration, mseed); }; });

  // config
  auto* config = app.add_subcommand("config", "Config files")->require_subcommand(1);
  auto* check = config->add_subcommand("check", "Validate a config and print its canonical form");
  std::string ckind, cfile;
  check->add_option("kind", ckind, "cluster | train | map | plan")->required()->check(
      CLI::IsMember({"cluster", "train", "map", "plan"}));
  check->add_option("file", cfile, "Config JSON")->required();
  check->callback([&] {
    action = [&] {
      std::cout << canonicalize(ckind, load_json(cfile)).dump(2) << "\n";
      return kOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }
  try {
    return action();
  } catch (const Error& e) {
    std::cerr << "adcloud: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "adcloud: " << e.what() << "\n";
    return kJobFailure;
  }
}

}  // namespace adcloud::cli
