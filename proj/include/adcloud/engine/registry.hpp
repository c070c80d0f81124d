#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "adcloud/binstream/codec.hpp"

namespace adcloud::storage {
class BackingStore;
}

namespace adcloud::engine {

using binstream::BinaryRecord;

enum class OpKind { MapPartitions, Bridge, Reduce };
enum class SlotKind { Cpu, Accel };

std::string to_string(OpKind kind);
std::string to_string(SlotKind kind);
OpKind parse_op_kind(const std::string& s);
SlotKind parse_slot_kind(const std::string& s);

/// What an op sees while it runs on a worker.
class TaskContext {
 public:
  TaskContext(std::size_t partition, const BinaryRecord& config, SlotKind backend, int worker_id,
              const storage::BackingStore* backing)
      : partition_(partition), config_(config), backend_(backend), worker_id_(worker_id), backing_(backing) {}

  std::size_t partition() const noexcept { return partition_; }
  const BinaryRecord& config() const noexcept { return config_; }
  SlotKind backend() const noexcept { return backend_; }
  int worker_id() const noexcept { return worker_id_; }

  /// Reads one partition of a dataset that has been persisted to the shared
  /// backing store. Throws MissingBlock if it is not there.
  std::vector<BinaryRecord> read_persisted(const std::string& dataset_id, std::size_t index) const;

 private:
  std::size_t partition_;
  const BinaryRecord& config_;
  SlotKind backend_;
  int worker_id_;
  const storage::BackingStore* backing_;
};

using PartitionFn = std::function<std::vector<BinaryRecord>(TaskContext&, std::vector<BinaryRecord>)>;
using CombineFn = std::function<BinaryRecord(const BinaryRecord& config, const BinaryRecord&, const BinaryRecord&)>;

struct OpImpl {
  OpKind kind;
  PartitionFn partition;  // MapPartitions and Bridge
  CombineFn combine;      // Reduce
};

/// Named operations, keyed by (name, backend). Closures are never shipped:
/// every process of a cluster registers the same names at startup.
class OpRegistry {
 public:
  void register_op(const std::string& name, OpKind kind, PartitionFn fn, SlotKind backend = SlotKind::Cpu);
  void register_combiner(const std::string& name, CombineFn fn, SlotKind backend = SlotKind::Cpu);

  const OpImpl* find(const std::string& name, SlotKind backend) const;
  /// Throws UnknownOp.
  const OpImpl& at(const std::string& name, SlotKind backend) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

  static OpRegistry& global();

 private:
  void insert(const std::string& name, SlotKind backend, OpImpl impl);
  mutable std::mutex mu_;
  std::map<std::pair<std::string, SlotKind>, OpImpl> ops_;
};

/// Ops every cluster process provides: identity, bridge, sum.
void register_builtin_ops(OpRegistry& registry = OpRegistry::global());

/// Storage key of one dataset partition.
std::string block_key(const std::string& dataset_id, std::size_t index);

}  // namespace adcloud::engine
