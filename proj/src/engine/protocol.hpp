#pragma once

// Driver <-> worker wire protocol. Every message is one DATA frame holding a
// record whose first field is the Utf8 message type.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "adcloud/binstream/stream.hpp"
#include "adcloud/engine/plan.hpp"
#include "adcloud/storage/tiered_store.hpp"

namespace adcloud::engine::protocol {

using binstream::FieldValue;

inline constexpr const char* kHello = "HELLO";
inline constexpr const char* kRun = "RUN";
inline constexpr const char* kDone = "DONE";
inline constexpr const char* kFetch = "FETCH";
inline constexpr const char* kStats = "STATS";
inline constexpr const char* kDrop = "DROP";
inline constexpr const char* kShutdown = "SHUTDOWN";
inline constexpr const char* kReply = "REPLY";

/// Sequential typed reader over a record's fields.
class Cursor {
 public:
  explicit Cursor(const BinaryRecord& r, std::size_t start = 0) : r_(r), i_(start) {}
  const std::string& utf8() { return next().as_utf8(); }
  std::int64_t int64() { return next().as_int64(); }
  double float64() { return next().as_float64(); }
  const binstream::Bytes& bytes() { return next().as_bytes(); }
  bool done() const noexcept { return i_ >= r_.size(); }

 private:
  const FieldValue& next();
  const BinaryRecord& r_;
  std::size_t i_;
};

struct SegmentSpec {
  std::string out_dataset;
  bool persist = false;
  std::vector<OpSpec> ops;
};

/// One partition's lineage chain: read `root_dataset` (persisted), then apply
/// each segment in order. Segment outputs other than the last may already be
/// cached on the executing worker, in which case they are reused.
struct TaskSpec {
  std::uint64_t task_id = 0;
  std::size_t partition = 0;
  SlotKind backend = SlotKind::Cpu;
  std::string root_dataset;
  std::vector<SegmentSpec> segments;
};

BinaryRecord encode_run(const TaskSpec& t);
TaskSpec decode_run(const BinaryRecord& r);

struct TaskOutcome {
  std::uint64_t task_id = 0;
  bool ok = false;
  std::string error;
  std::vector<std::string> cached_datasets;  // datasets whose partition now lives on the worker
  std::vector<double> op_seconds;
  std::uint64_t records_out = 0;
  std::uint64_t bytes_out = 0;
};

BinaryRecord encode_done(const TaskOutcome& o);
TaskOutcome decode_done(const BinaryRecord& r);

BinaryRecord encode_stats(const storage::StoreStats& s);
storage::StoreStats decode_stats(Cursor& c);

/// Loopback TCP helpers. Throw PortBindError / SpawnError.
int listen_loopback(std::uint16_t port, std::uint16_t& bound_port);
int accept_with_timeout(int listen_fd, int timeout_ms);
int connect_loopback(std::uint16_t port);

/// Framed record connection. Sends are serialized; one reader thread.
class Connection {
 public:
  explicit Connection(int fd);
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  /// Throws SinkIoError if the peer is gone.
  void send(const BinaryRecord& r);
  /// Next message, or nullopt when the peer closed the connection.
  std::optional<BinaryRecord> receive();
  /// Unblocks a concurrent receive().
  void shutdown_io();

 private:
  int fd_;
  std::mutex write_mu_;
  binstream::FdSink sink_;
  binstream::FdSource source_;
};

}  // namespace adcloud::engine::protocol
