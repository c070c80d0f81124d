#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "adcloud/engine/registry.hpp"
#include "adcloud/storage/tiered_store.hpp"

namespace adcloud::engine {

struct DatasetRef {
  std::string id;
  std::size_t num_partitions = 0;

  bool operator==(const DatasetRef&) const = default;
};

struct OpSpec {
  std::string name;
  OpKind kind = OpKind::MapPartitions;
  BinaryRecord config;
};

struct StagePlan {
  DatasetRef source;
  std::vector<OpSpec> ops;
  SlotKind backend = SlotKind::Cpu;
  /// Whether the final output is written through to the backing store.
  /// Intermediate op outputs are always cache-only.
  bool persist_output = true;
};

/// Throws InvalidPlan (empty ops, misplaced REDUCE) or UnknownOp.
void validate_plan(const StagePlan& plan, const OpRegistry& registry);

struct Partitioner {
  enum class Kind { ByFile, ByRecordCount, ByTimeWindow } kind = Kind::ByFile;
  std::uint64_t records = 0;  // ByRecordCount
  double seconds = 0;         // ByTimeWindow

  static Partitioner by_file() { return {}; }
  static Partitioner by_record_count(std::uint64_t n) { return {Kind::ByRecordCount, n, 0}; }
  static Partitioner by_time_window(double s) { return {Kind::ByTimeWindow, 0, s}; }
};

/// Splits records with a partitioner. `file_ends` marks the record index at
/// which each input file ends (used by ByFile). Timestamp windows use field 1
/// (Int64 nanoseconds) and align to the smallest timestamp.
std::vector<std::vector<BinaryRecord>> partition_records(std::vector<BinaryRecord> records,
                                                         const std::vector<std::size_t>& file_ends,
                                                         const Partitioner& partitioner);

struct TaskMetric {
  std::size_t partition = 0;
  int worker = -1;
  int attempt = 0;
  double seconds = 0;
  bool ok = false;
  std::string error;
  std::vector<double> op_seconds;
  std::uint64_t records_out = 0;
  std::uint64_t bytes_out = 0;
};

struct JobMetrics {
  std::string job_id;
  int workers = 0;
  double wall_seconds = 0;
  /// Per op: summed busy seconds across successful tasks.
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::vector<TaskMetric> tasks;
  /// Counter deltas across every worker store during the job.
  storage::StoreStats storage;
  /// Exact bytes written to the backing store by the job (workers + driver).
  std::uint64_t bytes_persisted = 0;
  std::uint64_t records_out = 0;
  std::uint64_t bytes_out = 0;
  int retries = 0;

  JobMetrics& operator+=(const JobMetrics& other);
};

struct JobResult {
  DatasetRef dataset;
  std::optional<BinaryRecord> reduced;
  JobMetrics metrics;
};

nlohmann::json to_json(const JobMetrics& m);
nlohmann::json to_json(const storage::StoreStats& s);

// Typed-field JSON form used by plan files:
// [{"utf8": "x"}, {"int64": 3}, {"float64": 1.5}, {"bytes_hex": "00ff"}]
nlohmann::json record_to_json(const BinaryRecord& r);
BinaryRecord record_from_json(const nlohmann::json& j);

}  // namespace adcloud::engine
