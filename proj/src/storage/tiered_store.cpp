#include "adcloud/storage/tiered_store.hpp"

#include <fstream>

#include "adcloud/error.hpp"
#include "adcloud/storage/backing_store.hpp"

namespace adcloud::storage {

namespace fs = std::filesystem;

TierConfig TierConfig::standard(fs::path cache_dir, fs::path backing_dir, std::uint64_t mem, std::uint64_t disk1,
                                std::uint64_t disk2) {
  TierConfig c;
  c.tiers = {{"MEM", mem}, {"DISK1", disk1}, {"DISK2", disk2}};
  c.cache_dir = std::move(cache_dir);
  c.backing_dir = std::move(backing_dir);
  return c;
}

void TierConfig::validate() const {
  static const std::vector<std::string> kOrder = {"MEM", "DISK1", "DISK2"};
  if (tiers.empty()) throw Error(Errc::InvalidArgument, "at least one cache tier is required");
  std::size_t next = 0;
  for (const auto& t : tiers) {
    auto it = std::find(kOrder.begin() + static_cast<std::ptrdiff_t>(next), kOrder.end(), t.name);
    if (it == kOrder.end()) throw Error(Errc::InvalidArgument, "tier '" + t.name + "' unknown or out of order");
    next = static_cast<std::size_t>(it - kOrder.begin()) + 1;
    if (t.capacity == 0) throw Error(Errc::InvalidArgument, "tier " + t.name + " has zero capacity");
  }
  if (backing_dir.empty()) throw Error(Errc::InvalidArgument, "backing directory is required");
}

const TierCounters& StoreStats::tier(const std::string& name) const {
  for (const auto& [n, c] : tiers) {
    if (n == name) return c;
  }
  throw Error(Errc::NotFound, "no tier named " + name);
}

StoreStats& StoreStats::operator+=(const StoreStats& other) {
  if (tiers.empty()) {
    tiers = other.tiers;
    return *this;
  }
  for (std::size_t i = 0; i < tiers.size() && i < other.tiers.size(); ++i) {
    auto& a = tiers[i].second;
    const auto& b = other.tiers[i].second;
    a.hits += b.hits;
    a.misses += b.misses;
    a.bytes_resident += b.bytes_resident;
    a.bytes_evicted += b.bytes_evicted;
    a.bytes_persisted += b.bytes_persisted;
    a.bytes_read += b.bytes_read;
    a.bytes_written += b.bytes_written;
  }
  return *this;
}

StoreStats StoreStats::delta_since(const StoreStats& before) const {
  StoreStats out = *this;
  for (std::size_t i = 0; i < out.tiers.size() && i < before.tiers.size(); ++i) {
    auto& a = out.tiers[i].second;
    const auto& b = before.tiers[i].second;
    a.hits -= b.hits;
    a.misses -= b.misses;
    a.bytes_evicted -= b.bytes_evicted;
    a.bytes_persisted -= b.bytes_persisted;
    a.bytes_read -= b.bytes_read;
    a.bytes_written -= b.bytes_written;
  }
  return out;
}

TieredStore::TieredStore(TierConfig config) : config_(std::move(config)) {
  config_.validate();
  backing_ = std::make_unique<BackingStore>(config_.backing_dir);
  for (std::size_t t = 1; t < config_.tiers.size(); ++t) {
    fs::create_directories(config_.cache_dir / config_.tiers[t].name);
  }
  lru_.resize(config_.tiers.size());
  resident_.assign(config_.tiers.size(), 0);
  counters_.resize(config_.tiers.size() + 1);
  persister_ = std::jthread([this](std::stop_token stop) { persist_loop(stop); });
}

TieredStore::~TieredStore() {
  try {
    flush_barrier();
  } catch (const Error&) {
  }
  persister_.request_stop();
  persist_cv_.notify_all();
}

std::optional<std::size_t> TieredStore::pick_tier(std::uint64_t size) const {
  for (std::size_t t = 0; t < config_.tiers.size(); ++t) {
    if (config_.tiers[t].capacity >= size) return t;
  }
  return std::nullopt;
}

fs::path TieredStore::disk_path(std::size_t tier, const std::string& key) const {
  return config_.cache_dir / config_.tiers[tier].name / (url_encode(key) + ".blk");
}

void TieredStore::write_disk_locked(std::size_t tier, const std::string& key, const Bytes& bytes) {
  const fs::path path = disk_path(tier, key);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::StorageFull, "cannot write cache block " + path.string());
}

std::shared_ptr<const Bytes> TieredStore::load_locked(const std::string& key, const Entry& e) {
  if (e.tier == 0) return e.mem;
  const fs::path path = disk_path(e.tier, key);
  std::ifstream in(path, std::ios::binary);
  auto bytes = std::make_shared<Bytes>(e.size);
  in.read(reinterpret_cast<char*>(bytes->data()), static_cast<std::streamsize>(e.size));
  if (!in) throw Error(Errc::MissingBlock, "cache block file lost: " + path.string());
  return bytes;
}

void TieredStore::remove_locked(const std::string& key, Entry& e) {
  lru_[e.tier].erase(e.last_access);
  resident_[e.tier] -= e.size;
  if (e.tier > 0) {
    std::error_code ec;
    fs::remove(disk_path(e.tier, key), ec);
  }
  e.mem.reset();
}

void TieredStore::make_room_locked(std::size_t tier, std::uint64_t size) {
  while (resident_[tier] + size > config_.tiers[tier].capacity && !lru_[tier].empty()) {
    demote_lru_locked(tier);
  }
}

void TieredStore::demote_lru_locked(std::size_t tier) {
  const std::string key = lru_[tier].begin()->second;
  Entry& e = entries_.at(key);
  auto payload = load_locked(key, e);
  counters_[tier].bytes_evicted += e.size;
  remove_locked(key, e);

  std::optional<std::size_t> lower;
  for (std::size_t t = tier + 1; t < config_.tiers.size(); ++t) {
    if (config_.tiers[t].capacity >= e.size) {
      lower = t;
      break;
    }
  }
  if (!lower) {
    // Leaving the last cache tier: never drop the only copy.
    if (!e.persisted && !pending_.contains(key)) {
      try {
        backing_->write(key, *payload);
      } catch (const Error& err) {
        throw Error(Errc::StorageFull, "evicting unpersisted block " + key + ": " + err.what());
      }
      counters_.back().bytes_persisted += e.size;
      counters_.back().bytes_written += e.size;
    }
    entries_.erase(key);
    return;
  }
  make_room_locked(*lower, e.size);
  e.tier = *lower;
  write_disk_locked(*lower, key, *payload);
  lru_[*lower][e.last_access] = key;
  resident_[*lower] += e.size;
  counters_[*lower].bytes_written += e.size;
}

void TieredStore::insert_locked(const std::string& key, std::shared_ptr<const Bytes> bytes, bool persisted,
                                std::uint64_t version) {
  const std::uint64_t size = bytes->size();
  const auto tier = pick_tier(size);
  if (!tier) return;
  make_room_locked(*tier, size);
  Entry e{*tier, size, ++clock_, nullptr, persisted, version};
  if (*tier == 0) {
    e.mem = std::move(bytes);
  } else {
    write_disk_locked(*tier, key, *bytes);
  }
  lru_[*tier][e.last_access] = key;
  resident_[*tier] += size;
  counters_[*tier].bytes_written += size;
  entries_[key] = std::move(e);
}

void TieredStore::put(const std::string& key, Bytes bytes, bool persist) {
  auto payload = std::make_shared<const Bytes>(std::move(bytes));
  std::lock_guard lock(mu_);
  const auto tier = pick_tier(payload->size());
  if (!tier && !persist) {
    throw Error(Errc::BlockTooLarge, key + " (" + std::to_string(payload->size()) + " bytes) fits no cache tier");
  }
  if (auto it = entries_.find(key); it != entries_.end()) {
    remove_locked(key, it->second);
    entries_.erase(it);
  }
  const std::uint64_t version = ++next_version_;
  insert_locked(key, payload, false, version);
  if (persist) {
    PersistJob job{++enqueued_seq_, key, version, payload};
    pending_[key] = job;
    queue_.push_back(std::move(job));
    persist_cv_.notify_one();
  }
}

std::optional<Bytes> TieredStore::try_get(const std::string& key) {
  std::shared_ptr<const Bytes> payload;
  {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      Entry& e = it->second;
      for (std::size_t t = 0; t < e.tier; ++t) ++counters_[t].misses;
      ++counters_[e.tier].hits;
      counters_[e.tier].bytes_read += e.size;
      payload = load_locked(key, e);
      if (e.tier == 0) {
        lru_[0].erase(e.last_access);
        e.last_access = ++clock_;
        lru_[0][e.last_access] = key;
      } else {
        const bool persisted = e.persisted;
        const std::uint64_t version = e.version;
        remove_locked(key, e);
        entries_.erase(it);
        insert_locked(key, payload, persisted, version);
      }
    } else {
      for (std::size_t t = 0; t < config_.tiers.size(); ++t) ++counters_[t].misses;
      auto& backing = counters_.back();
      bool persisted = true;
      std::uint64_t version = 0;
      if (auto p = pending_.find(key); p != pending_.end()) {
        payload = p->second.bytes;
        version = p->second.version;
        persisted = false;
      } else if (auto bytes = backing_->read(key)) {
        payload = std::make_shared<const Bytes>(std::move(*bytes));
        version = ++next_version_;
      } else {
        ++backing.misses;
        return std::nullopt;
      }
      ++backing.hits;
      backing.bytes_read += payload->size();
      insert_locked(key, payload, persisted, version);
    }
  }
  return Bytes(*payload);
}

Bytes TieredStore::get(const std::string& key) {
  auto bytes = try_get(key);
  if (!bytes) throw Error(Errc::NotFound, key);
  return std::move(*bytes);
}

bool TieredStore::contains(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    if (entries_.contains(key) || pending_.contains(key)) return true;
  }
  return backing_->exists(key);
}

std::optional<std::size_t> TieredStore::residency(const std::string& key) const {
  std::lock_guard lock(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second.tier;
  return std::nullopt;
}

bool TieredStore::is_persisted(const std::string& key) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second.persisted;
  }
  return backing_->exists(key);
}

void TieredStore::drop_caches() {
  std::lock_guard lock(mu_);
  for (auto& [key, e] : entries_) remove_locked(key, e);
  entries_.clear();
}

void TieredStore::flush_barrier() {
  std::unique_lock lock(mu_);
  const std::uint64_t target = enqueued_seq_;
  done_cv_.wait(lock, [&] { return completed_seq_ >= target; });
  if (persist_error_) {
    std::string message = std::move(*persist_error_);
    persist_error_.reset();
    throw Error(Errc::BackingIoError, message);
  }
}

StoreStats TieredStore::stats() const {
  std::lock_guard lock(mu_);
  StoreStats s;
  for (std::size_t t = 0; t < config_.tiers.size(); ++t) {
    TierCounters c = counters_[t];
    c.bytes_resident = resident_[t];
    s.tiers.emplace_back(config_.tiers[t].name, c);
  }
  s.tiers.emplace_back("BACKING", counters_.back());
  return s;
}

void TieredStore::persist_loop(std::stop_token stop) {
  std::unique_lock lock(mu_);
  for (;;) {
    persist_cv_.wait(lock, stop, [&] { return !queue_.empty(); });
    if (queue_.empty()) return;  // stop requested and drained
    PersistJob job = std::move(queue_.front());
    queue_.pop_front();
    lock.unlock();
    std::optional<std::string> failure;
    try {
      backing_->write(job.key, *job.bytes);
    } catch (const Error& e) {
      failure = e.what();
    }
    lock.lock();
    completed_seq_ = job.seq;
    if (failure) {
      persist_error_ = std::move(failure);
    } else {
      counters_.back().bytes_persisted += job.bytes->size();
      counters_.back().bytes_written += job.bytes->size();
      if (auto it = entries_.find(job.key); it != entries_.end() && it->second.version == job.version) {
        it->second.persisted = true;
      }
    }
    if (auto p = pending_.find(job.key); p != pending_.end() && p->second.seq == job.seq) pending_.erase(p);
    done_cv_.notify_all();
  }
}

}  // namespace adcloud::storage
