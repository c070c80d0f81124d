#include "adcloud/simharness/simharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <random>

#include "adcloud/binstream/bag_format.hpp"
#include "adcloud/binstream/bridge.hpp"
#include "adcloud/error.hpp"

namespace adcloud::sim {

using binstream::FieldTag;
using binstream::FieldValue;
using engine::OpKind;
using engine::TaskContext;

BagRecord BagRecord::from_record(const BinaryRecord& r) {
  if (r.size() != 3 || r[0].tag() != FieldTag::Utf8 || r[1].tag() != FieldTag::Int64 ||
      r[2].tag() != FieldTag::Bytes) {
    throw Error(Errc::ParseError, "bag record must be [Utf8 topic, Int64 timestamp, Bytes payload]");
  }
  return BagRecord{r[0].as_utf8(), r[1].as_int64(), r[2].as_bytes()};
}

BinaryRecord BagRecord::to_record() const {
  return BinaryRecord{FieldValue::utf8(topic), FieldValue::int64(timestamp_ns), FieldValue::bytes(payload)};
}

std::vector<BinaryRecord> read_bag_checked(const std::filesystem::path& path) {
  auto records = binstream::read_bag_file(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto rec = BagRecord::from_record(records[i]);
    if (i > 0 && rec.timestamp_ns < records[i - 1][1].as_int64()) {
      throw Error(Errc::TimestampRegression, path.string() + ": record " + std::to_string(i) + " goes back in time",
                  static_cast<std::int64_t>(i));
    }
  }
  return records;
}

DatasetRef load_bag(engine::Cluster& cluster, const std::filesystem::path& path,
                    const engine::Partitioner& partitioner) {
  auto records = read_bag_checked(path);
  const std::vector<std::size_t> ends{records.size()};
  return cluster.create_dataset(engine::partition_records(std::move(records), ends, partitioner));
}

std::vector<BinaryRecord> synth_records(const SynthSpec& spec) {
  if (!(spec.rate_hz > 0) || !(spec.duration_s > 0) || spec.topics.empty()) {
    throw Error(Errc::InvalidArgument, "synth_bag needs topics, rate > 0 and duration > 0");
  }
  std::mt19937_64 rng(spec.seed);
  const auto count = static_cast<std::int64_t>(std::llround(spec.rate_hz * spec.duration_s));
  const double period_ns = 1e9 / spec.rate_hz;
  struct Event {
    std::int64_t t;
    std::size_t topic;
  };
  std::vector<Event> events;
  for (std::size_t k = 0; k < spec.topics.size(); ++k) {
    // topics are phase-shifted so their streams interleave
    const double phase = period_ns * static_cast<double>(k) / static_cast<double>(spec.topics.size());
    for (std::int64_t i = 0; i < count; ++i) {
      events.push_back({spec.start_ns + static_cast<std::int64_t>(std::llround(phase + period_ns * static_cast<double>(i))), k});
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  std::vector<BinaryRecord> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    Bytes payload(spec.payload_bytes);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    out.push_back(BinaryRecord{FieldValue::utf8(spec.topics[e.topic]), FieldValue::int64(e.t),
                               FieldValue::bytes(std::move(payload))});
  }
  return out;
}

void synth_bag(const SynthSpec& spec, const std::filesystem::path& out) {
  binstream::write_bag_file(out, synth_records(spec));
}

nlohmann::json to_json(const SimReport& r) {
  return {{"records_replayed", r.records_replayed},
          {"outputs_received", r.outputs_received},
          {"mismatches", r.mismatches},
          {"golden", r.golden},
          {"partition_seconds", r.partition_seconds},
          {"wall_seconds", r.wall_seconds},
          {"workers", r.workers},
          {"retries", r.retries}};
}

namespace {

std::mutex& comparator_mu() {
  static std::mutex mu;
  return mu;
}

std::map<std::string, Comparator>& comparators() {
  static std::map<std::string, Comparator> m{
      {"bytes", [](const BinaryRecord& out, const BinaryRecord& gold) { return out[2] == gold[2]; }}};
  return m;
}

Comparator comparator_at(const std::string& name) {
  std::lock_guard lock(comparator_mu());
  auto it = comparators().find(name);
  if (it == comparators().end()) throw Error(Errc::UnknownOp, "comparator " + name);
  return it->second;
}

// config: [Utf8 exe, Int64 nargs, Utf8 arg..., Utf8 comparator, Utf8 golden id,
//          Int64 golden partitions, (Int64 min_ts, Int64 max_ts) per golden partition]
// output: one [Int64 replayed, Int64 outputs, Int64 mismatches] record.
std::vector<BinaryRecord> replay_partition(TaskContext& ctx, std::vector<BinaryRecord> in) {
  const auto& cfg = ctx.config();
  std::size_t i = 0;
  const auto exe = cfg[i++].as_utf8();
  std::vector<std::string> args;
  for (auto n = cfg[i++].as_int64(); n > 0; --n) args.push_back(cfg[i++].as_utf8());
  const auto comparator = comparator_at(cfg[i++].as_utf8());
  const auto golden_id = cfg[i++].as_utf8();
  const auto golden_parts = cfg[i++].as_int64();

  auto channel = binstream::spawn_bridge(exe, args);
  auto out = channel.transform(in);
  if (const int status = channel.wait(); status != 0) {
    throw Error(Errc::ChildExited, "algorithm exited with status " + std::to_string(status), status);
  }
  if (out.size() != in.size()) {
    throw Error(Errc::BridgeProtocolError, "algorithm returned " + std::to_string(out.size()) + " records for " +
                                               std::to_string(in.size()));
  }
  std::int64_t lo = INT64_MAX, hi = INT64_MIN;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].size() != 3 || !(out[k][0] == in[k][0]) || !(out[k][1] == in[k][1]) ||
        out[k][2].tag() != FieldTag::Bytes) {
      throw Error(Errc::BridgeProtocolError, "output " + std::to_string(k) + " does not keep topic and timestamp");
    }
    lo = std::min(lo, out[k][1].as_int64());
    hi = std::max(hi, out[k][1].as_int64());
  }

  std::int64_t mismatches = 0;
  if (!golden_id.empty() && !out.empty()) {
    std::map<std::pair<std::string, std::int64_t>, BinaryRecord> gold;
    for (std::int64_t g = 0; g < golden_parts; ++g) {
      const auto gmin = cfg[i + 2 * static_cast<std::size_t>(g)].as_int64();
      const auto gmax = cfg[i + 2 * static_cast<std::size_t>(g) + 1].as_int64();
      if (gmax < lo || gmin > hi) continue;
      for (auto& r : ctx.read_persisted(golden_id, static_cast<std::size_t>(g))) {
        gold.try_emplace({r[0].as_utf8(), r[1].as_int64()}, std::move(r));
      }
    }
    for (const auto& r : out) {
      auto it = gold.find({r[0].as_utf8(), r[1].as_int64()});
      if (it == gold.end()) {
        throw Error(Errc::GoldenJoinError, "no golden record for " + r[0].as_utf8() + " @ " +
                                               std::to_string(r[1].as_int64()));
      }
      if (!comparator(r, it->second)) ++mismatches;
    }
  }
  return {BinaryRecord{FieldValue::int64(static_cast<std::int64_t>(in.size())),
                       FieldValue::int64(static_cast<std::int64_t>(out.size())), FieldValue::int64(mismatches)}};
}

}  // namespace

void register_comparator(const std::string& name, Comparator fn) {
  std::lock_guard lock(comparator_mu());
  if (!comparators().try_emplace(name, std::move(fn)).second) throw Error(Errc::DuplicateName, "comparator " + name);
}

void register_sim_ops(engine::OpRegistry& registry) {
  for (auto k : {engine::SlotKind::Cpu, engine::SlotKind::Accel}) {
    if (!registry.find("sim.replay", k)) registry.register_op("sim.replay", OpKind::Bridge, replay_partition, k);
  }
}

SimReport replay(engine::Cluster& cluster, const DatasetRef& ds, const Algorithm& algo,
                 const std::optional<DatasetRef>& golden, const std::string& comparator) {
  comparator_at(comparator);
  BinaryRecord cfg{FieldValue::utf8(algo.executable.string()),
                   FieldValue::int64(static_cast<std::int64_t>(algo.args.size()))};
  for (const auto& a : algo.args) cfg.fields.push_back(FieldValue::utf8(a));
  cfg.fields.push_back(FieldValue::utf8(comparator));
  cfg.fields.push_back(FieldValue::utf8(golden ? golden->id : ""));
  if (golden) {
    // timestamp range per golden partition, so tasks only read what can join
    const auto parts = cluster.collect_partitions(*golden);
    cfg.fields.push_back(FieldValue::int64(static_cast<std::int64_t>(parts.size())));
    for (const auto& p : parts) {
      std::int64_t lo = INT64_MAX, hi = INT64_MIN;
      for (const auto& r : p) {
        lo = std::min(lo, r[1].as_int64());
        hi = std::max(hi, r[1].as_int64());
      }
      cfg.fields.push_back(FieldValue::int64(lo));
      cfg.fields.push_back(FieldValue::int64(hi));
    }
  } else {
    cfg.fields.push_back(FieldValue::int64(0));
  }

  engine::StagePlan plan;
  plan.source = ds;
  plan.ops = {{"sim.replay", OpKind::Bridge, cfg}, {"sum", OpKind::Reduce, {}}};
  plan.persist_output = false;

  const auto start = std::chrono::steady_clock::now();
  engine::JobResult res;
  try {
    res = cluster.submit(plan);
  } catch (const Error& e) {
    if (e.code() != Errc::TaskFailed) throw;
    const std::string what = e.what();
    for (auto code : {Errc::ChildExited, Errc::BridgeProtocolError, Errc::GoldenJoinError, Errc::RemoteError,
                      Errc::SpawnError, Errc::MissingBlock}) {
      if (what.find(std::string(errc_name(code)) + ":") != std::string::npos) throw Error(code, what, e.detail());
    }
    throw;
  }
  SimReport report;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.records_replayed = static_cast<std::uint64_t>((*res.reduced)[0].as_int64());
  report.outputs_received = static_cast<std::uint64_t>((*res.reduced)[1].as_int64());
  report.mismatches = static_cast<std::uint64_t>((*res.reduced)[2].as_int64());
  report.golden = golden.has_value();
  report.workers = cluster.worker_count();
  report.retries = res.metrics.retries;
  report.partition_seconds.assign(ds.num_partitions, 0.0);
  for (const auto& t : res.metrics.tasks) {
    if (t.ok) report.partition_seconds[t.partition] = t.seconds;
  }
  return report;
}

}  // namespace adcloud::sim
