#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "adcloud/binstream/codec.hpp"

namespace adcloud::storage {

/// Percent-encodes everything except [A-Za-z0-9._-].
std::string url_encode(const std::string& key);
std::string url_decode(const std::string& encoded);

/// Persistent directory shared by every storage node: one `<key>.blk` file
/// per block plus MANIFEST.json (key -> size). Safe across processes; the
/// manifest is rewritten under an flock.
class BackingStore {
 public:
  explicit BackingStore(std::filesystem::path dir);

  /// Atomic write (temp file + rename). Throws BackingIoError.
  void write(const std::string& key, binstream::ByteView bytes);
  std::optional<binstream::Bytes> read(const std::string& key) const;
  bool exists(const std::string& key) const;
  std::map<std::string, std::uint64_t> manifest() const;

  std::filesystem::path block_path(const std::string& key) const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace adcloud::storage
