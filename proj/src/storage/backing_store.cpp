#include "adcloud/storage/backing_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "adcloud/error.hpp"

namespace adcloud::storage {

namespace fs = std::filesystem;

namespace {

constexpr char kHex[] = "0123456789ABCDEF";

// Exclusive advisory lock held for the manifest read-modify-write.
class ManifestLock {
 public:
  explicit ManifestLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(Errc::BackingIoError, path.string() + ": " + std::strerror(errno));
    while (::flock(fd_, LOCK_EX) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        throw Error(Errc::BackingIoError, std::string("flock: ") + std::strerror(errno));
      }
    }
  }
  ~ManifestLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  ManifestLock(const ManifestLock&) = delete;
  ManifestLock& operator=(const ManifestLock&) = delete;

 private:
  int fd_;
};

std::string unique_suffix() {
  std::ostringstream os;
  os << ".tmp." << ::getpid() << '.' << std::this_thread::get_id();
  return os.str();
}

void write_file_atomic(const fs::path& path, binstream::ByteView bytes) {
  const fs::path tmp = path.string() + unique_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::BackingIoError, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::BackingIoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::BackingIoError, "rename " + tmp.string() + ": " + ec.message());
}

nlohmann::json read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BackingIoError, "corrupt manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::string url_encode(const std::string& key) {
  std::string out;
  out.reserve(key.size());
  for (unsigned char c : key) {
    if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string url_decode(const std::string& encoded) {
  std::string out;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    if (encoded[i] == '%' && i + 2 < encoded.size()) {
      out.push_back(static_cast<char>(std::stoi(encoded.substr(i + 1, 2), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(encoded[i]);
    }
  }
  return out;
}

BackingStore::BackingStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(Errc::BackingIoError, "cannot create " + dir_.string() + ": " + ec.message());
}

fs::path BackingStore::block_path(const std::string& key) const { return dir_ / (url_encode(key) + ".blk"); }

void BackingStore::write(const std::string& key, binstream::ByteView bytes) {
  write_file_atomic(block_path(key), bytes);
  ManifestLock lock(dir_ / "MANIFEST.lock");
  auto manifest = read_manifest(dir_ / "MANIFEST.json");
  manifest[key] = bytes.size();
  const std::string text = manifest.dump(1);
  write_file_atomic(dir_ / "MANIFEST.json",
                    binstream::ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::optional<binstream::Bytes> BackingStore::read(const std::string& key) const {
  std::ifstream in(block_path(key), std::ios::binary | std::ios::ate);
  if (!in) return std::nullopt;
  const auto size = static_cast<std::size_t>(in.tellg());
  binstream::Bytes bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error(Errc::BackingIoError, "short read from " + block_path(key).string());
  return bytes;
}

bool BackingStore::exists(const std::string& key) const { return fs::exists(block_path(key)); }

std::map<std::string, std::uint64_t> BackingStore::manifest() const {
  ManifestLock lock(dir_ / "MANIFEST.lock");
  std::map<std::string, std::uint64_t> out;
  const auto manifest = read_manifest(dir_ / "MANIFEST.json");
  for (const auto& [k, v] : manifest.items()) out[k] = v.get<std::uint64_t>();
  return out;
}

}  // namespace adcloud::storage
