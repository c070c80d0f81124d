#include "adcloud/binstream/bag_format.hpp"

#include <cstring>
#include <fstream>

#include "adcloud/binstream/stream.hpp"
#include "adcloud/error.hpp"

namespace adcloud::binstream {

Bytes encode_bag(std::span<const BinaryRecord> records) {
  MemorySink sink;
  Bytes header(kBagMagic, kBagMagic + 4);
  put_u32(header, kBagVersion);
  sink.write(header);
  serialize_partition(records, sink);
  return sink.take();
}

bool has_bag_magic(ByteView bytes) noexcept {
  return bytes.size() >= 4 && std::memcmp(bytes.data(), kBagMagic, 4) == 0;
}

std::vector<BinaryRecord> decode_bag(ByteView bytes) {
  if (!has_bag_magic(bytes) || bytes.size() < 8) throw Error(Errc::ParseError, "missing ADBG header");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kBagVersion) throw Error(Errc::ParseError, "unsupported bag version " + std::to_string(version));
  try {
    return deserialize_partition_bytes(bytes.subspan(8));
  } catch (const Error& e) {
    throw Error(Errc::ParseError, std::string("bag stream: ") + e.what());
  }
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  Bytes bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error(Errc::ParseError, "short read from " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, ByteView bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::SinkIoError, "cannot write " + path.string());
}

void write_bag_file(const std::filesystem::path& path, std::span<const BinaryRecord> records) {
  write_file(path, encode_bag(records));
}

std::vector<BinaryRecord> read_bag_file(const std::filesystem::path& path) { return decode_bag(read_file(path)); }

}  // namespace adcloud::binstream
