#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "adcloud/binstream/codec.hpp"

namespace adcloud::binstream {

// Bag file: magic "ADBG", u32-LE version 1, then a partition stream whose
// records are [Utf8 topic, Int64 timestamp_ns, Bytes payload].
inline constexpr std::uint8_t kBagMagic[4] = {'A', 'D', 'B', 'G'};
inline constexpr std::uint32_t kBagVersion = 1;

Bytes encode_bag(std::span<const BinaryRecord> records);
/// Throws ParseError on a bad header or malformed stream.
std::vector<BinaryRecord> decode_bag(ByteView bytes);
bool has_bag_magic(ByteView bytes) noexcept;

void write_bag_file(const std::filesystem::path& path, std::span<const BinaryRecord> records);
std::vector<BinaryRecord> read_bag_file(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, ByteView bytes);

}  // namespace adcloud::binstream
