#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "adcloud/engine/cluster.hpp"

namespace adcloud::sim {

using binstream::BinaryRecord;
using binstream::Bytes;
using engine::DatasetRef;

/// [Utf8 topic, Int64 timestamp_ns, Bytes payload]
struct BagRecord {
  std::string topic;
  std::int64_t timestamp_ns = 0;
  Bytes payload;

  static BagRecord from_record(const BinaryRecord& r);  // ParseError
  BinaryRecord to_record() const;
};

/// Reads a bag file and checks that timestamps never decrease.
/// Throws ParseError, TimestampRegression.
std::vector<BinaryRecord> read_bag_checked(const std::filesystem::path& path);

/// Loads one bag file into a persisted dataset, records in file order.
DatasetRef load_bag(engine::Cluster& cluster, const std::filesystem::path& path,
                    const engine::Partitioner& partitioner = engine::Partitioner::by_record_count(1024));

struct SynthSpec {
  std::vector<std::string> topics{"lidar"};
  double rate_hz = 10;
  double duration_s = 10;
  std::size_t payload_bytes = 64;
  std::uint64_t seed = 42;
  std::int64_t start_ns = 1'700'000'000'000'000'000;
};

/// Deterministic synthetic log: each topic fires at rate_hz with a fixed
/// per-topic phase; streams are merged by timestamp (ties by topic order).
std::vector<BinaryRecord> synth_records(const SynthSpec& spec);
void synth_bag(const SynthSpec& spec, const std::filesystem::path& out);

struct Algorithm {
  std::filesystem::path executable;
  std::vector<std::string> args;
};

struct SimReport {
  std::uint64_t records_replayed = 0;
  std::uint64_t outputs_received = 0;
  std::uint64_t mismatches = 0;
  bool golden = false;
  std::vector<double> partition_seconds;
  double wall_seconds = 0;
  int workers = 0;
  int retries = 0;

  /// Equality ignoring timing, worker count and retries.
  bool same_outcome(const SimReport& o) const {
    return records_replayed == o.records_replayed && outputs_received == o.outputs_received &&
           mismatches == o.mismatches && golden == o.golden && partition_seconds.size() == o.partition_seconds.size();
  }
};

nlohmann::json to_json(const SimReport& r);

/// Payload comparison used for the golden join. Returns true on a match.
using Comparator = std::function<bool(const BinaryRecord& output, const BinaryRecord& golden)>;
/// Built in: "bytes" (exact payload equality).
void register_comparator(const std::string& name, Comparator fn);

/// Streams every partition through its own child process and aggregates the
/// per-partition verdicts with a deterministic reduce. Throws ChildExited,
/// BridgeProtocolError, GoldenJoinError (or TaskFailed for other causes)
/// once the retry budget is spent.
SimReport replay(engine::Cluster& cluster, const DatasetRef& ds, const Algorithm& algo,
                 const std::optional<DatasetRef>& golden = std::nullopt, const std::string& comparator = "bytes");

/// Registers the replay ops. Must run in every cluster process.
void register_sim_ops(engine::OpRegistry& registry = engine::OpRegistry::global());

}  // namespace adcloud::sim
