#include "protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "adcloud/error.hpp"

namespace adcloud::engine::protocol {

const FieldValue& Cursor::next() {
  if (i_ >= r_.size()) throw Error(Errc::BridgeProtocolError, "message has too few fields");
  return r_[i_++];
}

BinaryRecord encode_run(const TaskSpec& t) {
  BinaryRecord r{FieldValue::utf8(kRun),
                 FieldValue::int64(static_cast<std::int64_t>(t.task_id)),
                 FieldValue::int64(static_cast<std::int64_t>(t.partition)),
                 FieldValue::int64(static_cast<std::int64_t>(t.backend)),
                 FieldValue::utf8(t.root_dataset),
                 FieldValue::int64(static_cast<std::int64_t>(t.segments.size()))};
  for (const auto& s : t.segments) {
    r.fields.push_back(FieldValue::utf8(s.out_dataset));
    r.fields.push_back(FieldValue::int64(s.persist ? 1 : 0));
    r.fields.push_back(FieldValue::int64(static_cast<std::int64_t>(s.ops.size())));
    for (const auto& op : s.ops) {
      r.fields.push_back(FieldValue::utf8(op.name));
      r.fields.push_back(FieldValue::int64(static_cast<std::int64_t>(op.kind)));
      r.fields.push_back(FieldValue::bytes(binstream::encode_record(op.config)));
    }
  }
  return r;
}

TaskSpec decode_run(const BinaryRecord& r) {
  Cursor c(r, 1);
  TaskSpec t;
  t.task_id = static_cast<std::uint64_t>(c.int64());
  t.partition = static_cast<std::size_t>(c.int64());
  t.backend = static_cast<SlotKind>(c.int64());
  t.root_dataset = c.utf8();
  const auto segments = c.int64();
  for (std::int64_t i = 0; i < segments; ++i) {
    SegmentSpec s;
    s.out_dataset = c.utf8();
    s.persist = c.int64() != 0;
    const auto ops = c.int64();
    for (std::int64_t k = 0; k < ops; ++k) {
      OpSpec op;
      op.name = c.utf8();
      op.kind = static_cast<OpKind>(c.int64());
      op.config = binstream::decode_record(c.bytes()).value;
      s.ops.push_back(std::move(op));
    }
    t.segments.push_back(std::move(s));
  }
  return t;
}

BinaryRecord encode_done(const TaskOutcome& o) {
  BinaryRecord cached;
  for (const auto& d : o.cached_datasets) cached.fields.push_back(FieldValue::utf8(d));
  BinaryRecord times;
  for (double s : o.op_seconds) times.fields.push_back(FieldValue::float64(s));
  return BinaryRecord{FieldValue::utf8(kDone),
                      FieldValue::int64(static_cast<std::int64_t>(o.task_id)),
                      FieldValue::int64(o.ok ? 1 : 0),
                      FieldValue::utf8(o.error),
                      FieldValue::bytes(binstream::encode_record(cached)),
                      FieldValue::bytes(binstream::encode_record(times)),
                      FieldValue::int64(static_cast<std::int64_t>(o.records_out)),
                      FieldValue::int64(static_cast<std::int64_t>(o.bytes_out))};
}

TaskOutcome decode_done(const BinaryRecord& r) {
  Cursor c(r, 1);
  TaskOutcome o;
  o.task_id = static_cast<std::uint64_t>(c.int64());
  o.ok = c.int64() != 0;
  o.error = c.utf8();
  for (const auto& f : binstream::decode_record(c.bytes()).value.fields) o.cached_datasets.push_back(f.as_utf8());
  for (const auto& f : binstream::decode_record(c.bytes()).value.fields) o.op_seconds.push_back(f.as_float64());
  o.records_out = static_cast<std::uint64_t>(c.int64());
  o.bytes_out = static_cast<std::uint64_t>(c.int64());
  return o;
}

BinaryRecord encode_stats(const storage::StoreStats& s) {
  BinaryRecord r;
  r.fields.push_back(FieldValue::int64(static_cast<std::int64_t>(s.tiers.size())));
  for (const auto& [name, c] : s.tiers) {
    r.fields.push_back(FieldValue::utf8(name));
    for (std::uint64_t v : {c.hits, c.misses, c.bytes_resident, c.bytes_evicted, c.bytes_persisted, c.bytes_read,
                            c.bytes_written}) {
      r.fields.push_back(FieldValue::int64(static_cast<std::int64_t>(v)));
    }
  }
  return r;
}

storage::StoreStats decode_stats(Cursor& c) {
  storage::StoreStats s;
  const auto n = c.int64();
  for (std::int64_t i = 0; i < n; ++i) {
    std::string name = c.utf8();
    storage::TierCounters t;
    for (std::uint64_t* v : {&t.hits, &t.misses, &t.bytes_resident, &t.bytes_evicted, &t.bytes_persisted,
                             &t.bytes_read, &t.bytes_written}) {
      *v = static_cast<std::uint64_t>(c.int64());
    }
    s.tiers.emplace_back(std::move(name), t);
  }
  return s;
}

int listen_loopback(std::uint16_t port, std::uint16_t& bound_port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::PortBindError, std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 64) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(Errc::PortBindError, "port " + std::to_string(port) + ": " + std::strerror(err));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_port = ntohs(addr.sin_port);
  return fd;
}

int accept_with_timeout(int listen_fd, int timeout_ms) {
  pollfd p{listen_fd, POLLIN, 0};
  int rc;
  do {
    rc = ::poll(&p, 1, timeout_ms);
  } while (rc < 0 && errno == EINTR);
  if (rc <= 0) return -1;
  const int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd >= 0) {
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

int connect_loopback(std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::SpawnError, std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(Errc::SpawnError, std::string("connect to driver: ") + std::strerror(err));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

Connection::Connection(int fd) : fd_(fd), sink_(fd), source_(fd) {}

Connection::~Connection() { ::close(fd_); }

void Connection::send(const BinaryRecord& r) {
  std::lock_guard lock(write_mu_);
  binstream::write_record_frame(sink_, r);
  sink_.flush();
}

std::optional<BinaryRecord> Connection::receive() {
  try {
    auto frame = binstream::read_frame(source_);
    if (!frame || frame->kind != binstream::FrameKind::Data) return std::nullopt;
    return binstream::decode_record(frame->payload).value;
  } catch (const Error&) {
    return std::nullopt;
  }
}

void Connection::shutdown_io() { ::shutdown(fd_, SHUT_RDWR); }

}  // namespace adcloud::engine::protocol
