#pragma once

#include <sys/types.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adcloud/engine/plan.hpp"
#include "adcloud/engine/registry.hpp"
#include "adcloud/storage/tiered_store.hpp"

namespace adcloud::engine {

struct SlotInventory {
  int cpu = 1;
  int accel = 0;

  int of(SlotKind k) const noexcept { return k == SlotKind::Cpu ? cpu : accel; }
};

struct ClusterConfig {
  int workers = 1;
  SlotInventory slots;
  std::uint64_t mem_capacity = 256ull << 20;
  std::uint64_t disk1_capacity = 1ull << 30;
  std::uint64_t disk2_capacity = 4ull << 30;
  std::filesystem::path state_dir;
  std::uint16_t port = 0;  // 0 = ephemeral
  int max_retries = 1;
  /// Binary that hosts workers when run with --adcloud-worker. Defaults to
  /// the current executable.
  std::filesystem::path worker_executable;
};

/// One start or stop of a task, in driver order.
struct TaskEvent {
  std::uint64_t task_id;
  std::size_t partition;
  int worker;
  SlotKind kind;
  bool start;
  double at_seconds;
};

/// Driver handle for a local multi-process cluster. Each worker is a separate
/// process connected over loopback TCP and co-locates its own tiered store;
/// all stores share one backing directory.
class Cluster {
 public:
  /// Throws InvalidArgument (workers < 1), SpawnError, PortBindError.
  static std::unique_ptr<Cluster> start(const ClusterConfig& config, const OpRegistry& registry = OpRegistry::global());
  ~Cluster();
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  /// Reads bag or partition-stream files matching a glob into a persisted
  /// dataset. Throws EmptyInput when nothing matches, ParseError.
  DatasetRef ingest(const std::string& glob_pattern, const Partitioner& partitioner);
  /// Persists driver-side partitions as a new dataset.
  DatasetRef create_dataset(const std::vector<std::vector<BinaryRecord>>& partitions, const std::string& name = "");

  /// Runs a plan. Throws TaskFailed(partition) after the retry budget is spent.
  JobResult submit(const StagePlan& plan);

  std::vector<BinaryRecord> collect(const DatasetRef& ds);
  std::vector<std::vector<BinaryRecord>> collect_partitions(const DatasetRef& ds);
  /// Ordered binary-tree reduction over partition indices. Throws EmptyInput.
  BinaryRecord reduce_deterministic(const DatasetRef& ds, const std::string& combiner,
                                    const BinaryRecord& config = {});

  /// Empties every worker's cache tiers (simulated cache loss).
  void drop_caches();
  storage::StoreStats storage_stats();
  std::vector<TaskEvent> event_log() const;
  int live_workers() const;
  int worker_count() const;
  /// Test hook: SIGKILLs one worker process.
  void kill_worker(int worker_id);
  std::vector<pid_t> worker_pids() const;
  /// Bytes the driver has written to the backing store through ingest and
  /// create_dataset.
  std::uint64_t ingest_bytes() const;
  const ClusterConfig& config() const;
  std::filesystem::path backing_dir() const;

  void shutdown();

  class Impl;

 private:
  explicit Cluster(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// If argv requests worker mode, runs the worker loop and returns its exit
/// code; otherwise returns nullopt. Call from main() of any binary that starts
/// clusters, after registering ops.
std::optional<int> run_worker_if_requested(int argc, char** argv, const OpRegistry& registry = OpRegistry::global());

/// Maximum number of simultaneously running tasks of `kind` in an event log.
int peak_concurrency(const std::vector<TaskEvent>& events, SlotKind kind);

}  // namespace adcloud::engine
