#include "adcloud/engine/registry.hpp"

#include "adcloud/binstream/bridge.hpp"
#include "adcloud/error.hpp"
#include "adcloud/storage/backing_store.hpp"

namespace adcloud::engine {

using binstream::FieldTag;
using binstream::FieldValue;

std::string to_string(OpKind kind) {
  switch (kind) {
    case OpKind::MapPartitions: return "MAP_PARTITIONS";
    case OpKind::Bridge: return "BRIDGE";
    case OpKind::Reduce: return "REDUCE";
  }
  return "?";
}

std::string to_string(SlotKind kind) { return kind == SlotKind::Cpu ? "CPU" : "ACCEL"; }

OpKind parse_op_kind(const std::string& s) {
  if (s == "MAP_PARTITIONS") return OpKind::MapPartitions;
  if (s == "BRIDGE") return OpKind::Bridge;
  if (s == "REDUCE") return OpKind::Reduce;
  throw Error(Errc::InvalidPlan, "unknown op kind '" + s + "'");
}

SlotKind parse_slot_kind(const std::string& s) {
  if (s == "CPU" || s == "cpu") return SlotKind::Cpu;
  if (s == "ACCEL" || s == "accel") return SlotKind::Accel;
  throw Error(Errc::InvalidPlan, "unknown slot kind '" + s + "'");
}

std::vector<BinaryRecord> TaskContext::read_persisted(const std::string& dataset_id, std::size_t index) const {
  const auto key = block_key(dataset_id, index);
  std::optional<binstream::Bytes> bytes;
  if (backing_ != nullptr) bytes = backing_->read(key);
  if (!bytes) throw Error(Errc::MissingBlock, key);
  return binstream::deserialize_partition_bytes(*bytes);
}

void OpRegistry::insert(const std::string& name, SlotKind backend, OpImpl impl) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = ops_.try_emplace({name, backend}, std::move(impl));
  if (!inserted) throw Error(Errc::DuplicateName, name + " (" + to_string(backend) + ")");
}

void OpRegistry::register_op(const std::string& name, OpKind kind, PartitionFn fn, SlotKind backend) {
  if (kind == OpKind::Reduce) throw Error(Errc::InvalidArgument, "use register_combiner for REDUCE ops");
  insert(name, backend, OpImpl{kind, std::move(fn), {}});
}

void OpRegistry::register_combiner(const std::string& name, CombineFn fn, SlotKind backend) {
  insert(name, backend, OpImpl{OpKind::Reduce, {}, std::move(fn)});
}

const OpImpl* OpRegistry::find(const std::string& name, SlotKind backend) const {
  std::lock_guard lock(mu_);
  auto it = ops_.find({name, backend});
  return it == ops_.end() ? nullptr : &it->second;
}

const OpImpl& OpRegistry::at(const std::string& name, SlotKind backend) const {
  if (const auto* op = find(name, backend)) return *op;
  throw Error(Errc::UnknownOp, name + " (" + to_string(backend) + ")");
}

bool OpRegistry::contains(const std::string& name) const {
  std::lock_guard lock(mu_);
  for (const auto& [k, _] : ops_) {
    if (k.first == name) return true;
  }
  return false;
}

std::vector<std::string> OpRegistry::names() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [k, _] : ops_) {
    if (out.empty() || out.back() != k.first) out.push_back(k.first);
  }
  return out;
}

OpRegistry& OpRegistry::global() {
  static OpRegistry& registry = []() -> OpRegistry& {
    static OpRegistry r;
    register_builtin_ops(r);
    return r;
  }();
  return registry;
}

namespace {

std::vector<BinaryRecord> identity(TaskContext&, std::vector<BinaryRecord> in) { return in; }

// config: [Utf8 executable, Utf8 arg...]
std::vector<BinaryRecord> bridge(TaskContext& ctx, std::vector<BinaryRecord> in) {
  const auto& cfg = ctx.config();
  if (cfg.size() == 0) throw Error(Errc::InvalidPlan, "bridge op needs an executable");
  std::vector<std::string> args;
  for (std::size_t i = 1; i < cfg.size(); ++i) args.push_back(cfg[i].as_utf8());
  auto channel = binstream::spawn_bridge(cfg[0].as_utf8(), args);
  auto out = channel.transform(in);
  if (const int status = channel.wait(); status != 0) {
    throw Error(Errc::ChildExited, "bridge child exited with status " + std::to_string(status), status);
  }
  return out;
}

// Field-wise sum; Int64 wraps, Float64 adds, anything else must match.
BinaryRecord sum(const BinaryRecord&, const BinaryRecord& a, const BinaryRecord& b) {
  if (a.size() != b.size()) throw Error(Errc::InvalidArgument, "sum: field count mismatch");
  BinaryRecord out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].tag() != b[i].tag()) throw Error(Errc::InvalidArgument, "sum: field tag mismatch");
    switch (a[i].tag()) {
      case FieldTag::Int64:
        out.fields.push_back(FieldValue::int64(static_cast<std::int64_t>(static_cast<std::uint64_t>(a[i].as_int64()) +
                                                                         static_cast<std::uint64_t>(b[i].as_int64()))));
        break;
      case FieldTag::Float64:
        out.fields.push_back(FieldValue::float64(a[i].as_float64() + b[i].as_float64()));
        break;
      default:
        if (!(a[i] == b[i])) throw Error(Errc::InvalidArgument, "sum: non-numeric fields differ");
        out.fields.push_back(a[i]);
    }
  }
  return out;
}

}  // namespace

void register_builtin_ops(OpRegistry& registry) {
  for (SlotKind k : {SlotKind::Cpu, SlotKind::Accel}) {
    if (!registry.find("identity", k)) registry.register_op("identity", OpKind::MapPartitions, identity, k);
    if (!registry.find("bridge", k)) registry.register_op("bridge", OpKind::Bridge, bridge, k);
    if (!registry.find("sum", k)) registry.register_combiner("sum", sum, k);
  }
}

std::string block_key(const std::string& dataset_id, std::size_t index) {
  return "ds:" + dataset_id + ":" + std::to_string(index);
}

}  // namespace adcloud::engine
