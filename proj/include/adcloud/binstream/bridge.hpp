#pragma once

#include <sys/types.h>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adcloud/binstream/codec.hpp"
#include "adcloud/binstream/stream.hpp"

namespace adcloud::binstream {

/// Parent-side handle to a child process speaking the frame protocol on its
/// standard input and output. Single writer, single reader per direction.
class BridgeChannel {
 public:
  BridgeChannel(BridgeChannel&&) noexcept;
  BridgeChannel& operator=(BridgeChannel&&) noexcept;
  BridgeChannel(const BridgeChannel&) = delete;
  BridgeChannel& operator=(const BridgeChannel&) = delete;
  /// Kills the child if it is still running and reaps it.
  ~BridgeChannel();

  void send(const BinaryRecord& record);
  /// Sends END and closes the child's standard input.
  void send_end();
  void send_partition(std::span<const BinaryRecord> records);

  /// Next output record, or nullopt after END. Throws ChildExited if the
  /// child's output ends before END, RemoteError on an ERROR frame.
  std::optional<BinaryRecord> receive();
  std::vector<BinaryRecord> receive_partition();

  /// Streams `records` in on a writer thread while reading the outputs, so
  /// children that emit while consuming cannot deadlock on full pipes.
  std::vector<BinaryRecord> transform(std::span<const BinaryRecord> records);

  /// Waits for the child to exit and returns its status (exit code or
  /// 128 + signal). Idempotent.
  int wait();
  pid_t pid() const noexcept { return pid_; }

 private:
  friend BridgeChannel spawn_bridge(const std::filesystem::path&, const std::vector<std::string>&);
  BridgeChannel(pid_t pid, int to_child, int from_child);
  [[noreturn]] void raise_child_exited(const std::string& what);
  void close_input();
  void release();

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::optional<int> exit_status_;
  std::unique_ptr<FdSink> sink_;
  std::unique_ptr<FdSource> source_;
  std::unique_ptr<PartitionReader> reader_;
};

BridgeChannel spawn_bridge(const std::filesystem::path& executable, const std::vector<std::string>& args);

/// Child-side loop: reads DATA frames from standard input, writes the mapped
/// record for each (or nothing when `fn` returns nullopt), then END. Any
/// exception from `fn` is reported in-band as an ERROR frame. Returns the
/// process exit code.
int serve_filter(const std::function<std::optional<BinaryRecord>(const BinaryRecord&)>& fn);

}  // namespace adcloud::binstream
