#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adcloud/binstream/codec.hpp"

namespace adcloud::binstream {

class ByteSink {
 public:
  virtual ~ByteSink() = default;
  /// Writes all of `data` or throws SinkIoError.
  virtual void write(ByteView data) = 0;
  virtual void flush() {}
};

class ByteSource {
 public:
  virtual ~ByteSource() = default;
  /// Reads up to `out.size()` bytes; returns 0 only at end of stream.
  virtual std::size_t read(std::span<std::uint8_t> out) = 0;
};

class MemorySink : public ByteSink {
 public:
  void write(ByteView data) override { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  const Bytes& bytes() const noexcept { return bytes_; }
  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

class MemorySource : public ByteSource {
 public:
  explicit MemorySource(ByteView data) : data_(data) {}
  std::size_t read(std::span<std::uint8_t> out) override;

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

/// Buffered writer over a file descriptor. Does not own the descriptor.
class FdSink : public ByteSink {
 public:
  explicit FdSink(int fd, std::size_t buffer = 64 * 1024) : fd_(fd) { buf_.reserve(buffer); }
  ~FdSink() override;
  void write(ByteView data) override;
  void flush() override;

 private:
  void write_all(const std::uint8_t* p, std::size_t n);
  int fd_;
  Bytes buf_;
};

/// Buffered reader over a file descriptor. Does not own the descriptor.
class FdSource : public ByteSource {
 public:
  explicit FdSource(int fd, std::size_t buffer = 64 * 1024) : fd_(fd), buf_(buffer) {}
  std::size_t read(std::span<std::uint8_t> out) override;

 private:
  int fd_;
  Bytes buf_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
};

enum class FrameKind : std::uint8_t { Data = 0x01, End = 0x02, Error = 0x03 };

struct Frame {
  FrameKind kind;
  Bytes payload;
};

void write_frame(ByteSink& sink, FrameKind kind, ByteView payload);
void write_record_frame(ByteSink& sink, const BinaryRecord& record);
void write_end_frame(ByteSink& sink);
void write_error_frame(ByteSink& sink, const std::string& message);

/// Reads one frame. Returns nullopt on a clean end of stream at a frame
/// boundary; a partial frame throws TruncatedFrame.
std::optional<Frame> read_frame(ByteSource& source);

/// Emits one DATA frame per record followed by END, then flushes.
void serialize_partition(std::span<const BinaryRecord> records, ByteSink& sink);

/// Reads records until END. EOF before END throws TruncatedFrame; an ERROR
/// frame throws RemoteError with the frame's message.
std::vector<BinaryRecord> deserialize_partition(ByteSource& source);

/// Pull-style reader over a partition stream.
class PartitionReader {
 public:
  explicit PartitionReader(ByteSource& source) : source_(source) {}
  /// Next record, or nullopt once END has been read.
  std::optional<BinaryRecord> next();
  bool finished() const noexcept { return finished_; }

 private:
  ByteSource& source_;
  bool finished_ = false;
};

Bytes serialize_partition_bytes(std::span<const BinaryRecord> records);
std::vector<BinaryRecord> deserialize_partition_bytes(ByteView bytes);

}  // namespace adcloud::binstream
