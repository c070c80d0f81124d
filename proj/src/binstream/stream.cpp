#include "adcloud/binstream/stream.hpp"

#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "adcloud/error.hpp"

namespace adcloud::binstream {

namespace {

constexpr std::size_t kFrameHeader = 5;

// Fills `out` completely. Returns the number of bytes read, which is short
// only at end of stream.
std::size_t read_fully(ByteSource& source, std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const std::size_t n = source.read(out.subspan(got));
    if (n == 0) break;
    got += n;
  }
  return got;
}

}  // namespace

std::size_t MemorySource::read(std::span<std::uint8_t> out) {
  const std::size_t n = std::min(out.size(), data_.size() - pos_);
  std::memcpy(out.data(), data_.data() + pos_, n);
  pos_ += n;
  return n;
}

FdSink::~FdSink() {
  try {
    flush();
  } catch (const Error&) {
  }
}

void FdSink::write(ByteView data) {
  if (buf_.size() + data.size() > buf_.capacity()) {
    flush();
    if (data.size() >= buf_.capacity()) {
      write_all(data.data(), data.size());
      return;
    }
  }
  buf_.insert(buf_.end(), data.begin(), data.end());
}

void FdSink::flush() {
  if (buf_.empty()) return;
  // Clear first so a failed flush is not retried from the destructor.
  Bytes pending;
  pending.reserve(buf_.capacity());
  pending.swap(buf_);
  write_all(pending.data(), pending.size());
}

void FdSink::write_all(const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd_, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::SinkIoError, std::strerror(errno));
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

std::size_t FdSource::read(std::span<std::uint8_t> out) {
  if (begin_ == end_) {
    if (out.size() >= buf_.size()) {
      for (;;) {
        const ssize_t r = ::read(fd_, out.data(), out.size());
        if (r >= 0) return static_cast<std::size_t>(r);
        if (errno != EINTR) return 0;
      }
    }
    for (;;) {
      const ssize_t r = ::read(fd_, buf_.data(), buf_.size());
      if (r >= 0) {
        begin_ = 0;
        end_ = static_cast<std::size_t>(r);
        break;
      }
      if (errno != EINTR) return 0;
    }
    if (end_ == 0) return 0;
  }
  const std::size_t n = std::min(out.size(), end_ - begin_);
  std::memcpy(out.data(), buf_.data() + begin_, n);
  begin_ += n;
  return n;
}

void write_frame(ByteSink& sink, FrameKind kind, ByteView payload) {
  Bytes header;
  header.reserve(kFrameHeader);
  header.push_back(static_cast<std::uint8_t>(kind));
  put_u32(header, static_cast<std::uint32_t>(payload.size()));
  sink.write(header);
  if (!payload.empty()) sink.write(payload);
}

void write_record_frame(ByteSink& sink, const BinaryRecord& record) {
  const Bytes payload = encode_record(record);
  write_frame(sink, FrameKind::Data, payload);
}

void write_end_frame(ByteSink& sink) { write_frame(sink, FrameKind::End, {}); }

void write_error_frame(ByteSink& sink, const std::string& message) {
  write_frame(sink, FrameKind::Error,
              ByteView(reinterpret_cast<const std::uint8_t*>(message.data()), message.size()));
}

std::optional<Frame> read_frame(ByteSource& source) {
  std::uint8_t header[kFrameHeader];
  const std::size_t got = read_fully(source, header);
  if (got == 0) return std::nullopt;
  if (got < kFrameHeader) throw Error(Errc::TruncatedFrame, "incomplete frame header");
  const std::uint8_t kind = header[0];
  if (kind < 0x01 || kind > 0x03) throw Error(Errc::UnknownTag, "frame kind 0x" + std::to_string(kind));
  const std::uint32_t len = get_u32(header + 1);
  Frame frame{static_cast<FrameKind>(kind), Bytes(len)};
  if (read_fully(source, frame.payload) < len) throw Error(Errc::TruncatedFrame, "incomplete frame payload");
  return frame;
}

void serialize_partition(std::span<const BinaryRecord> records, ByteSink& sink) {
  Bytes payload;
  for (const auto& r : records) {
    payload.clear();
    encode_record(r, payload);
    write_frame(sink, FrameKind::Data, payload);
  }
  write_end_frame(sink);
  sink.flush();
}

std::optional<BinaryRecord> PartitionReader::next() {
  if (finished_) return std::nullopt;
  auto frame = read_frame(source_);
  if (!frame) throw Error(Errc::TruncatedFrame, "end of stream before END frame");
  switch (frame->kind) {
    case FrameKind::End:
      finished_ = true;
      return std::nullopt;
    case FrameKind::Error:
      finished_ = true;
      throw Error(Errc::RemoteError, std::string(frame->payload.begin(), frame->payload.end()));
    case FrameKind::Data: {
      auto [record, used] = decode_record(frame->payload);
      if (used != frame->payload.size()) {
        throw Error(Errc::BridgeProtocolError, "trailing bytes after record in DATA frame");
      }
      return std::move(record);
    }
  }
  return std::nullopt;
}

std::vector<BinaryRecord> deserialize_partition(ByteSource& source) {
  PartitionReader reader(source);
  std::vector<BinaryRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

Bytes serialize_partition_bytes(std::span<const BinaryRecord> records) {
  MemorySink sink;
  serialize_partition(records, sink);
  return sink.take();
}

std::vector<BinaryRecord> deserialize_partition_bytes(ByteView bytes) {
  MemorySource source(bytes);
  return deserialize_partition(source);
}

}  // namespace adcloud::binstream
