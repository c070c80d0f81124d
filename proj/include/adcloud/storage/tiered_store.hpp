#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "adcloud/binstream/codec.hpp"

namespace adcloud::storage {

using binstream::Bytes;
using binstream::ByteView;

struct TierSpec {
  std::string name;  // MEM, DISK1 or DISK2
  std::uint64_t capacity = 0;
};

/// Ordered cache tiers (MEM first) above a shared persistent backing
/// directory. DISK tiers live under `cache_dir`.
struct TierConfig {
  std::vector<TierSpec> tiers;
  std::filesystem::path cache_dir;
  std::filesystem::path backing_dir;

  static TierConfig standard(std::filesystem::path cache_dir, std::filesystem::path backing_dir,
                             std::uint64_t mem, std::uint64_t disk1, std::uint64_t disk2);
  /// Throws InvalidArgument on zero capacities, unknown or out-of-order names.
  void validate() const;
};

struct TierCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t bytes_resident = 0;
  std::uint64_t bytes_evicted = 0;
  std::uint64_t bytes_persisted = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;

  bool operator==(const TierCounters&) const = default;
};

/// One row per cache tier in configured order, then a final BACKING row.
struct StoreStats {
  std::vector<std::pair<std::string, TierCounters>> tiers;

  const TierCounters& tier(const std::string& name) const;
  StoreStats& operator+=(const StoreStats& other);
  /// Per-field difference; bytes_resident is taken from `*this`.
  StoreStats delta_since(const StoreStats& before) const;
};

class BackingStore;

/// Tiered block cache with strict per-tier LRU (logical access clock),
/// demotion on eviction and an asynchronous persistence queue.
class TieredStore {
 public:
  explicit TieredStore(TierConfig config);
  ~TieredStore();
  TieredStore(const TieredStore&) = delete;
  TieredStore& operator=(const TieredStore&) = delete;

  void put(const std::string& key, Bytes bytes, bool persist);
  Bytes get(const std::string& key);
  /// Like get() but returns nullopt instead of throwing NotFound.
  std::optional<Bytes> try_get(const std::string& key);
  /// True if the key is cached or persisted; does not touch counters.
  bool contains(const std::string& key);

  /// Returns once every persist enqueued before the call is durable.
  void flush_barrier();
  StoreStats stats() const;

  /// Index into config().tiers of the tier holding the key, if cached.
  std::optional<std::size_t> residency(const std::string& key) const;
  bool is_persisted(const std::string& key) const;

  /// Simulates loss of all cache tiers. Pending persists are kept.
  void drop_caches();

  const TierConfig& config() const noexcept { return config_; }
  BackingStore& backing() noexcept { return *backing_; }

 private:
  struct Entry {
    std::size_t tier;
    std::uint64_t size;
    std::uint64_t last_access;
    std::shared_ptr<const Bytes> mem;  // set while resident in tier 0
    bool persisted = false;
    std::uint64_t version = 0;
  };
  struct PersistJob {
    std::uint64_t seq;
    std::string key;
    std::uint64_t version;
    std::shared_ptr<const Bytes> bytes;
  };

  std::optional<std::size_t> pick_tier(std::uint64_t size) const;
  // All of these run with mu_ held.
  void insert_locked(const std::string& key, std::shared_ptr<const Bytes> bytes, bool persisted,
                     std::uint64_t version);
  void make_room_locked(std::size_t tier, std::uint64_t size);
  void demote_lru_locked(std::size_t tier);
  void remove_locked(const std::string& key, Entry& e);
  std::shared_ptr<const Bytes> load_locked(const std::string& key, const Entry& e);
  void write_disk_locked(std::size_t tier, const std::string& key, const Bytes& bytes);
  std::filesystem::path disk_path(std::size_t tier, const std::string& key) const;
  void persist_loop(std::stop_token stop);

  TierConfig config_;
  std::unique_ptr<BackingStore> backing_;

  mutable std::mutex mu_;
  std::uint64_t clock_ = 0;
  std::uint64_t next_version_ = 0;
  std::unordered_map<std::string, Entry> entries_;
  std::vector<std::map<std::uint64_t, std::string>> lru_;  // per tier: last_access -> key
  std::vector<std::uint64_t> resident_;
  std::vector<TierCounters> counters_;  // cache tiers then backing

  std::condition_variable_any persist_cv_;
  std::condition_variable done_cv_;
  std::deque<PersistJob> queue_;
  std::unordered_map<std::string, PersistJob> pending_;  // newest queued persist per key
  std::uint64_t enqueued_seq_ = 0;
  std::uint64_t completed_seq_ = 0;
  std::optional<std::string> persist_error_;
  std::jthread persister_;
};

}  // namespace adcloud::storage
