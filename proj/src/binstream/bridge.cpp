#include "adcloud/binstream/bridge.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "adcloud/binstream/process.hpp"
#include "adcloud/error.hpp"

namespace adcloud::binstream {

BridgeChannel::BridgeChannel(pid_t pid, int to_child, int from_child)
    : pid_(pid),
      to_child_(to_child),
      from_child_(from_child),
      sink_(std::make_unique<FdSink>(to_child)),
      source_(std::make_unique<FdSource>(from_child)),
      reader_(std::make_unique<PartitionReader>(*source_)) {}

BridgeChannel::BridgeChannel(BridgeChannel&& o) noexcept
    : pid_(std::exchange(o.pid_, -1)),
      to_child_(std::exchange(o.to_child_, -1)),
      from_child_(std::exchange(o.from_child_, -1)),
      exit_status_(o.exit_status_),
      sink_(std::move(o.sink_)),
      source_(std::move(o.source_)),
      reader_(std::move(o.reader_)) {}

BridgeChannel& BridgeChannel::operator=(BridgeChannel&& o) noexcept {
  if (this != &o) {
    release();
    pid_ = std::exchange(o.pid_, -1);
    to_child_ = std::exchange(o.to_child_, -1);
    from_child_ = std::exchange(o.from_child_, -1);
    exit_status_ = o.exit_status_;
    sink_ = std::move(o.sink_);
    source_ = std::move(o.source_);
    reader_ = std::move(o.reader_);
  }
  return *this;
}

BridgeChannel::~BridgeChannel() { release(); }

void BridgeChannel::release() {
  const bool drained = reader_ && reader_->finished();
  if (to_child_ >= 0) {
    sink_.reset();
    ::close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    reader_.reset();
    source_.reset();
    ::close(from_child_);
    from_child_ = -1;
  }
  if (pid_ > 0 && !exit_status_) {
    // A child that already sent END is left to exit on its own.
    if (!drained) ::kill(pid_, SIGKILL);
    exit_status_ = wait_process(pid_);
  }
}

void BridgeChannel::close_input() {
  if (to_child_ < 0) return;
  sink_.reset();
  ::close(to_child_);
  to_child_ = -1;
}

int BridgeChannel::wait() {
  close_input();
  if (!exit_status_) exit_status_ = wait_process(pid_);
  return *exit_status_;
}

void BridgeChannel::raise_child_exited(const std::string& what) {
  const int status = wait();
  throw Error(Errc::ChildExited, what + " (status " + std::to_string(status) + ")", status);
}

void BridgeChannel::send(const BinaryRecord& record) {
  if (!sink_) throw Error(Errc::BridgeProtocolError, "send after END");
  try {
    write_record_frame(*sink_, record);
  } catch (const Error& e) {
    if (e.code() != Errc::SinkIoError) throw;
    raise_child_exited("child stopped reading");
  }
}

void BridgeChannel::send_end() {
  if (!sink_) return;
  try {
    write_end_frame(*sink_);
    sink_->flush();
  } catch (const Error& e) {
    if (e.code() != Errc::SinkIoError) throw;
    close_input();
    raise_child_exited("child stopped reading");
  }
  close_input();
}

void BridgeChannel::send_partition(std::span<const BinaryRecord> records) {
  for (const auto& r : records) send(r);
  send_end();
}

std::optional<BinaryRecord> BridgeChannel::receive() {
  if (!reader_) throw Error(Errc::BridgeProtocolError, "channel released");
  try {
    return reader_->next();
  } catch (const Error& e) {
    if (e.code() == Errc::TruncatedFrame) raise_child_exited("child output ended before END");
    throw;
  }
}

std::vector<BinaryRecord> BridgeChannel::receive_partition() {
  std::vector<BinaryRecord> out;
  while (auto r = receive()) out.push_back(std::move(*r));
  return out;
}

std::vector<BinaryRecord> BridgeChannel::transform(std::span<const BinaryRecord> records) {
  // The writer swallows broken-pipe errors; the reader reports the child's
  // fate, which is the more precise error.
  std::jthread writer([this, records] {
    try {
      for (const auto& r : records) write_record_frame(*sink_, r);
      write_end_frame(*sink_);
      sink_->flush();
    } catch (const Error&) {
    }
    close_input();
  });
  // The input side belongs to the writer until it is joined, so errors are
  // only raised after the join.
  std::vector<BinaryRecord> out;
  try {
    while (auto r = reader_->next()) out.push_back(std::move(*r));
  } catch (const Error& e) {
    if (e.code() == Errc::TruncatedFrame && pid_ > 0 && !exit_status_) {
      exit_status_ = wait_process(pid_);  // a dead child makes the writer fail fast
      writer.join();
      raise_child_exited("child output ended before END");
    }
    if (pid_ > 0 && !exit_status_) ::kill(pid_, SIGKILL);  // unblock a writer stuck on a full pipe
    writer.join();
    throw;
  } catch (...) {
    if (pid_ > 0 && !exit_status_) ::kill(pid_, SIGKILL);
    writer.join();
    throw;
  }
  writer.join();
  return out;
}

BridgeChannel spawn_bridge(const std::filesystem::path& executable, const std::vector<std::string>& args) {
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(Errc::SpawnError, std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error(Errc::SpawnError, std::strerror(errno));
  }
  pid_t pid;
  try {
    pid = spawn_process(executable, args, in_pipe[0], out_pipe[1]);
  } catch (...) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw;
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  return BridgeChannel(pid, in_pipe[1], out_pipe[0]);
}

int serve_filter(const std::function<std::optional<BinaryRecord>(const BinaryRecord&)>& fn) {
  ignore_sigpipe();
  FdSource in(STDIN_FILENO);
  FdSink out(STDOUT_FILENO);
  PartitionReader reader(in);
  try {
    while (auto r = reader.next()) {
      std::optional<BinaryRecord> mapped;
      try {
        mapped = fn(*r);
      } catch (const std::exception& e) {
        write_error_frame(out, e.what());
        out.flush();
        return 1;
      }
      if (mapped) write_record_frame(out, *mapped);
    }
    write_end_frame(out);
    out.flush();
  } catch (const Error& e) {
    if (e.code() == Errc::SinkIoError) return 1;
    try {
      write_error_frame(out, e.what());
      out.flush();
    } catch (const Error&) {
    }
    return 1;
  }
  return 0;
}

}  // namespace adcloud::binstream
