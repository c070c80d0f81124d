#include "adcloud/engine/cluster.hpp"

#include <fcntl.h>
#include <glob.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "adcloud/binstream/bag_format.hpp"
#include "adcloud/binstream/process.hpp"
#include "adcloud/error.hpp"
#include "adcloud/storage/backing_store.hpp"
#include "protocol.hpp"

namespace adcloud::engine {

namespace fs = std::filesystem;
namespace proto = protocol;
using binstream::Bytes;
using binstream::FieldValue;
using Clock = std::chrono::steady_clock;

namespace {

std::string session_token() {
  std::random_device rd;
  static constexpr char kAlpha[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string s;
  for (int i = 0; i < 8; ++i) s += kAlpha[rd() % 36];
  return s;
}

BinaryRecord tree_combine(const CombineFn& combine, const BinaryRecord& config, const std::vector<BinaryRecord>& v,
                          std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return v[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return combine(config, tree_combine(combine, config, v, lo, mid), tree_combine(combine, config, v, mid, hi));
}

// Fold within each partition, then an ordered binary tree over the non-empty
// partitions. The shape depends only on the partitioning.
BinaryRecord reduce_partitions(const CombineFn& combine, const BinaryRecord& config,
                               const std::vector<std::vector<BinaryRecord>>& parts) {
  std::vector<BinaryRecord> partials;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    BinaryRecord acc = p.front();
    for (std::size_t i = 1; i < p.size(); ++i) acc = combine(config, acc, p[i]);
    partials.push_back(std::move(acc));
  }
  if (partials.empty()) throw Error(Errc::EmptyInput, "reduce over an empty dataset");
  return tree_combine(combine, config, partials, 0, partials.size());
}

}  // namespace

// How a dataset can be rebuilt: read `root` from the backing store and
// replay `segments`. Persisted datasets are their own root.
struct Lineage {
  std::string root;
  std::vector<proto::SegmentSpec> segments;
  std::size_t num_partitions = 0;
  SlotKind backend = SlotKind::Cpu;
};

class Cluster::Impl {
 public:
  struct WorkerHandle {
    int id = 0;
    pid_t pid = -1;
    std::unique_ptr<proto::Connection> conn;
    std::thread reader;
    bool alive = true;
    int free_cpu = 0;
    int free_accel = 0;
    std::set<std::uint64_t> in_flight;

    int& free(SlotKind k) { return k == SlotKind::Cpu ? free_cpu : free_accel; }
  };

  Impl(const ClusterConfig& config, const OpRegistry& registry) : config_(config), registry_(registry) {}

  ~Impl() { shutdown(); }

  void start() {
    if (config_.workers < 1) throw Error(Errc::InvalidArgument, "a cluster needs at least one worker");
    if (config_.slots.cpu < 0 || config_.slots.accel < 0 || config_.slots.cpu + config_.slots.accel < 1) {
      throw Error(Errc::InvalidArgument, "each worker needs at least one slot");
    }
    binstream::ignore_sigpipe();
    session_ = session_token();
    if (config_.state_dir.empty()) {
      config_.state_dir = fs::temp_directory_path() / ("adcloud-" + session_);
      owns_state_dir_ = true;
    }
    fs::create_directories(config_.state_dir / "backing");
    backing_ = std::make_unique<storage::BackingStore>(config_.state_dir / "backing");
    fs::path exe = config_.worker_executable.empty() ? fs::read_symlink("/proc/self/exe") : config_.worker_executable;

    std::uint16_t port = 0;
    listen_fd_ = proto::listen_loopback(config_.port, port);
    port_ = port;
    const int devnull = ::open("/dev/null", O_WRONLY | O_CLOEXEC);
    std::vector<pid_t> pids;
    for (int i = 0; i < config_.workers; ++i) {
      const auto cache = config_.state_dir / "workers" / session_ / std::to_string(i);
      fs::create_directories(cache);
      std::vector<std::string> args{"--adcloud-worker",
                                    "--id", std::to_string(i),
                                    "--port", std::to_string(port),
                                    "--cache", cache.string(),
                                    "--backing", backing_->dir().string(),
                                    "--mem", std::to_string(config_.mem_capacity),
                                    "--disk1", std::to_string(config_.disk1_capacity),
                                    "--disk2", std::to_string(config_.disk2_capacity)};
      try {
        pids.push_back(binstream::spawn_process(exe, args, -1, devnull));
      } catch (...) {
        ::close(devnull);
        for (pid_t p : pids) ::kill(p, SIGKILL), binstream::wait_process(p);
        throw;
      }
    }
    ::close(devnull);

    workers_.resize(config_.workers);
    int connected = 0;
    const auto deadline = Clock::now() + std::chrono::seconds(60);
    while (connected < config_.workers) {
      for (pid_t p : pids) {
        int status = 0;
        if (::waitpid(p, &status, WNOHANG) == p) {
          kill_all(pids);
          throw Error(Errc::SpawnError, "worker process exited during startup");
        }
      }
      if (Clock::now() > deadline) {
        kill_all(pids);
        throw Error(Errc::SpawnError, "workers did not connect");
      }
      const int fd = proto::accept_with_timeout(listen_fd_, 200);
      if (fd < 0) continue;
      auto conn = std::make_unique<proto::Connection>(fd);
      auto hello = conn->receive();
      if (!hello || hello->size() < 3 || (*hello)[0].as_utf8() != proto::kHello) continue;
      const auto id = static_cast<int>((*hello)[1].as_int64());
      if (id < 0 || id >= config_.workers || workers_[id].conn) continue;
      auto& w = workers_[id];
      w.id = id;
      w.pid = static_cast<pid_t>((*hello)[2].as_int64());
      w.conn = std::move(conn);
      w.free_cpu = config_.slots.cpu;
      w.free_accel = config_.slots.accel;
      ++connected;
    }
    epoch_ = Clock::now();
    for (auto& w : workers_) {
      w.reader = std::thread([this, &w] { read_loop(w); });
    }
  }

  void shutdown() {
    std::vector<WorkerHandle*> live;
    {
      std::lock_guard lock(mu_);
      if (stopped_) return;
      stopped_ = true;
      for (auto& w : workers_) live.push_back(&w);
    }
    for (auto* w : live) {
      if (!w->conn) continue;
      try {
        w->conn->send(BinaryRecord{FieldValue::utf8(proto::kShutdown)});
      } catch (const Error&) {
      }
    }
    for (auto* w : live) {
      if (w->pid <= 0) continue;
      const auto deadline = Clock::now() + std::chrono::seconds(10);
      int status = 0;
      while (::waitpid(w->pid, &status, WNOHANG) == 0) {
        if (Clock::now() > deadline) {
          ::kill(w->pid, SIGKILL);
          ::waitpid(w->pid, &status, 0);
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
    }
    for (auto* w : live) {
      if (w->conn) w->conn->shutdown_io();
      if (w->reader.joinable()) w->reader.join();
    }
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
    std::error_code ec;
    if (owns_state_dir_) {
      fs::remove_all(config_.state_dir, ec);
    } else {
      fs::remove_all(config_.state_dir / "workers" / session_, ec);
    }
  }

  // ---- messaging ----

  void read_loop(WorkerHandle& w) {
    while (auto msg = w.conn->receive()) {
      const auto& type = (*msg)[0].as_utf8();
      std::lock_guard lock(mu_);
      if (type == proto::kDone) {
        auto out = proto::decode_done(*msg);
        outcomes_[out.task_id] = std::move(out);
      } else if (type == proto::kReply) {
        replies_[(*msg)[1].as_int64()] = std::move(*msg);
      }
      cv_.notify_all();
    }
    std::lock_guard lock(mu_);
    w.alive = false;
    for (auto task : w.in_flight) {
      if (!outcomes_.count(task)) {
        proto::TaskOutcome o;
        o.task_id = task;
        o.error = "worker " + std::to_string(w.id) + " died";
        outcomes_[task] = std::move(o);
      }
    }
    cv_.notify_all();
  }

  /// Sends a request and waits for its REPLY; nullopt if the worker died.
  std::optional<BinaryRecord> request(int worker, const std::string& type, std::vector<FieldValue> extra = {}) {
    std::int64_t req;
    WorkerHandle* w;
    {
      std::lock_guard lock(mu_);
      w = &workers_.at(worker);
      if (!w->alive) return std::nullopt;
      req = next_req_++;
    }
    BinaryRecord msg{FieldValue::utf8(type), FieldValue::int64(req)};
    for (auto& f : extra) msg.fields.push_back(std::move(f));
    try {
      w->conn->send(msg);
    } catch (const Error&) {
      return std::nullopt;
    }
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return replies_.count(req) || !w->alive; });
    auto it = replies_.find(req);
    if (it == replies_.end()) return std::nullopt;
    auto r = std::move(it->second);
    replies_.erase(it);
    return r;
  }

  std::vector<int> live_ids() const {
    std::lock_guard lock(mu_);
    std::vector<int> ids;
    for (const auto& w : workers_) {
      if (w.alive) ids.push_back(w.id);
    }
    return ids;
  }

  storage::StoreStats gather_stats() {
    storage::StoreStats total;
    for (int id : live_ids()) {
      auto r = request(id, proto::kStats);
      if (!r) continue;
      proto::Cursor c(*r, 2);
      auto s = proto::decode_stats(c);
      if (total.tiers.empty()) {
        total = s;
      } else {
        total += s;
      }
    }
    return total;
  }

  // ---- datasets ----

  std::string fresh_id(const std::string& prefix) {
    std::lock_guard lock(mu_);
    return session_ + "-" + prefix + std::to_string(next_dataset_++);
  }

  Lineage lineage_of(const DatasetRef& ds) const {
    std::lock_guard lock(mu_);
    auto it = lineage_.find(ds.id);
    if (it != lineage_.end()) return it->second;
    return Lineage{ds.id, {}, ds.num_partitions};
  }

  DatasetRef create_dataset(const std::vector<std::vector<BinaryRecord>>& partitions, const std::string& name) {
    std::string id = name.empty() ? fresh_id("d") : name;
    {
      std::lock_guard lock(mu_);
      if (lineage_.count(id)) throw Error(Errc::DuplicateName, "dataset " + id);
    }
    std::vector<std::vector<BinaryRecord>> parts = partitions;
    if (parts.empty()) parts.emplace_back();
    std::uint64_t written = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto bytes = binstream::serialize_partition_bytes(parts[i]);
      backing_->write(block_key(id, i), bytes);
      written += bytes.size();
    }
    std::lock_guard lock(mu_);
    ingest_bytes_ += written;
    lineage_[id] = Lineage{id, {}, parts.size()};
    return DatasetRef{id, parts.size()};
  }

  DatasetRef ingest(const std::string& pattern, const Partitioner& partitioner) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::string> files;
    if (rc == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
    }
    ::globfree(&g);
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(Errc::EmptyInput, "no files match " + pattern);
    std::vector<BinaryRecord> records;
    std::vector<std::size_t> ends;
    for (const auto& f : files) {
      const auto bytes = binstream::read_file(f);
      if (binstream::has_bag_magic(bytes)) {
        for (auto& r : binstream::decode_bag(bytes)) records.push_back(std::move(r));
      } else {
        try {
          for (auto& r : binstream::deserialize_partition_bytes(bytes)) records.push_back(std::move(r));
        } catch (const Error& e) {
          throw Error(Errc::ParseError, f + ": " + e.what());
        }
      }
      ends.push_back(records.size());
    }
    return create_dataset(partition_records(std::move(records), ends, partitioner), "");
  }

  std::optional<Bytes> fetch(int worker, const std::string& key) {
    auto r = request(worker, proto::kFetch, {FieldValue::utf8(key)});
    if (!r || (*r)[2].as_int64() == 0) return std::nullopt;
    return (*r)[3].as_bytes();
  }

  std::vector<BinaryRecord> read_partition(const DatasetRef& ds, std::size_t p) {
    const auto lin = lineage_of(ds);
    const auto key = block_key(ds.id, p);
    if (lin.segments.empty() || lin.segments.back().persist) {
      auto bytes = backing_->read(key);
      if (!bytes) throw Error(Errc::MissingBlock, key);
      return binstream::deserialize_partition_bytes(*bytes);
    }
    int holder = -1;
    {
      std::lock_guard lock(mu_);
      auto it = location_.find(key);
      if (it != location_.end() && workers_[it->second].alive) holder = it->second;
    }
    if (holder >= 0) {
      if (auto bytes = fetch(holder, key)) return binstream::deserialize_partition_bytes(*bytes);
    }
    // Cache lost: rebuild the partition from lineage on some worker.
    auto tasks = build_tasks(lin, {p}, config_.slots.of(lin.backend) > 0 ? lin.backend : SlotKind::Cpu);
    run_tasks(std::move(tasks), nullptr);
    {
      std::lock_guard lock(mu_);
      holder = location_.at(key);
    }
    if (auto bytes = fetch(holder, key)) return binstream::deserialize_partition_bytes(*bytes);
    throw Error(Errc::MissingBlock, key);
  }

  std::vector<std::vector<BinaryRecord>> collect_partitions(const DatasetRef& ds) {
    std::vector<std::vector<BinaryRecord>> out;
    for (std::size_t p = 0; p < ds.num_partitions; ++p) out.push_back(read_partition(ds, p));
    return out;
  }

  // ---- scheduling ----

  struct PendingTask {
    proto::TaskSpec spec;
    int attempt = 0;
    int last_worker = -1;
  };

  std::vector<PendingTask> build_tasks(const Lineage& lin, const std::vector<std::size_t>& partitions,
                                       SlotKind backend) {
    std::vector<PendingTask> tasks;
    for (std::size_t p : partitions) {
      PendingTask t;
      t.spec.partition = p;
      t.spec.backend = backend;
      t.spec.root_dataset = lin.root;
      t.spec.segments = lin.segments;
      tasks.push_back(std::move(t));
    }
    return tasks;
  }

  // Picks a worker for `t`: free slot of the right kind, not the worker that
  // just failed it (unless it is the only one left), preferring the worker
  // that caches the task's input.
  int pick_worker_locked(const PendingTask& t) {
    const auto kind = t.spec.backend;
    std::string input_key;
    if (t.spec.segments.size() >= 2) {
      input_key = block_key(t.spec.segments[t.spec.segments.size() - 2].out_dataset, t.spec.partition);
    } else {
      input_key = block_key(t.spec.root_dataset, t.spec.partition);
    }
    bool other_exists = false;
    for (const auto& w : workers_) {
      if (w.alive && w.id != t.last_worker && config_.slots.of(kind) > 0) other_exists = true;
    }
    int best = -1;
    auto loc = location_.find(input_key);
    const int preferred = loc == location_.end() ? -1 : loc->second;
    for (auto& w : workers_) {
      if (!w.alive || w.free(kind) <= 0) continue;
      if (w.id == t.last_worker && other_exists) continue;
      if (w.id == preferred) return w.id;
      if (best < 0 || w.free(kind) > workers_[best].free(kind)) best = w.id;
    }
    return best;
  }

  bool any_capable_locked(SlotKind kind) const {
    if (config_.slots.of(kind) <= 0) return false;
    return std::any_of(workers_.begin(), workers_.end(), [](const WorkerHandle& w) { return w.alive; });
  }

  /// Runs every task to completion, retrying each failure once on another
  /// worker. Throws TaskFailed for the lowest failing partition.
  void run_tasks(std::vector<PendingTask> tasks, JobMetrics* metrics) {
    std::deque<PendingTask> queue(std::make_move_iterator(tasks.begin()), std::make_move_iterator(tasks.end()));
    struct Running {
      PendingTask task;
      int worker;
      Clock::time_point started;
    };
    std::map<std::uint64_t, Running> running;
    std::optional<std::pair<std::size_t, std::string>> failure;

    std::unique_lock lock(mu_);
    for (;;) {
      // dispatch
      while (!failure && !queue.empty()) {
        auto& t = queue.front();
        if (!any_capable_locked(t.spec.backend)) {
          failure = {t.spec.partition, "no live worker offers " + to_string(t.spec.backend) + " slots"};
          break;
        }
        const int wid = pick_worker_locked(t);
        if (wid < 0) break;
        auto& w = workers_[wid];
        t.spec.task_id = next_task_++;
        w.free(t.spec.backend) -= 1;
        w.in_flight.insert(t.spec.task_id);
        events_.push_back(TaskEvent{t.spec.task_id, t.spec.partition, wid, t.spec.backend, true, since_epoch()});
        const auto id = t.spec.task_id;
        auto msg = proto::encode_run(t.spec);
        running.emplace(id, Running{std::move(t), wid, Clock::now()});
        queue.pop_front();
        try {
          w.conn->send(msg);
        } catch (const Error&) {
          // reader thread will report the worker dead
        }
      }
      if (running.empty() && (queue.empty() || failure)) break;

      cv_.wait(lock, [&] {
        for (const auto& [id, _] : running) {
          if (outcomes_.count(id)) return true;
        }
        return false;
      });
      for (auto it = running.begin(); it != running.end();) {
        auto o = outcomes_.find(it->first);
        if (o == outcomes_.end()) {
          ++it;
          continue;
        }
        auto out = std::move(o->second);
        outcomes_.erase(o);
        auto r = std::move(it->second);
        it = running.erase(it);
        auto& w = workers_[r.worker];
        w.in_flight.erase(out.task_id);
        w.free(r.task.spec.backend) += 1;
        events_.push_back(
            TaskEvent{out.task_id, r.task.spec.partition, r.worker, r.task.spec.backend, false, since_epoch()});
        if (metrics) {
          TaskMetric m;
          m.partition = r.task.spec.partition;
          m.worker = r.worker;
          m.attempt = r.task.attempt;
          m.seconds = std::chrono::duration<double>(Clock::now() - r.started).count();
          m.ok = out.ok;
          m.error = out.error;
          m.op_seconds = out.op_seconds;
          m.records_out = out.records_out;
          m.bytes_out = out.bytes_out;
          metrics->tasks.push_back(std::move(m));
        }
        if (out.ok) {
          for (const auto& ds : out.cached_datasets) location_[block_key(ds, r.task.spec.partition)] = r.worker;
        } else if (r.task.attempt < config_.max_retries && !failure) {
          r.task.attempt += 1;
          r.task.last_worker = r.worker;
          if (metrics) metrics->retries += 1;
          queue.push_front(std::move(r.task));
        } else if (!failure || r.task.spec.partition < failure->first) {
          failure = {r.task.spec.partition, out.error};
        }
      }
    }
    if (failure) {
      throw Error(Errc::TaskFailed, "partition " + std::to_string(failure->first) + ": " + failure->second,
                  static_cast<std::int64_t>(failure->first));
    }
  }

  JobResult submit(const StagePlan& plan) {
    validate_plan(plan, registry_);
    {
      std::lock_guard lock(mu_);
      if (config_.slots.of(plan.backend) <= 0) {
        throw Error(Errc::InvalidPlan, "no worker offers " + to_string(plan.backend) + " slots");
      }
    }
    const auto started = Clock::now();
    JobResult result;
    auto& m = result.metrics;
    {
      std::lock_guard lock(mu_);
      m.job_id = session_ + "-job" + std::to_string(next_job_++);
    }
    m.workers = config_.workers;

    auto lin = lineage_of(plan.source);
    const std::string out_id = fresh_id("d");
    lin.segments.push_back(proto::SegmentSpec{out_id, plan.persist_output, plan.ops});
    lin.num_partitions = plan.source.num_partitions;
    lin.backend = plan.backend;

    const auto before = gather_stats();
    std::vector<std::size_t> parts(plan.source.num_partitions);
    for (std::size_t i = 0; i < parts.size(); ++i) parts[i] = i;
    std::exception_ptr err;
    try {
      run_tasks(build_tasks(lin, parts, plan.backend), &m);
    } catch (...) {
      err = std::current_exception();
    }
    m.storage = gather_stats().delta_since(before);
    if (!m.storage.tiers.empty()) m.bytes_persisted = m.storage.tier("BACKING").bytes_persisted;
    if (err) std::rethrow_exception(err);

    if (plan.persist_output) {
      lin = Lineage{out_id, {}, plan.source.num_partitions};
    }
    {
      std::lock_guard lock(mu_);
      lineage_[out_id] = lin;
    }
    result.dataset = DatasetRef{out_id, plan.source.num_partitions};

    std::map<std::string, double> per_op;
    for (const auto& t : m.tasks) {
      if (!t.ok) continue;
      m.records_out += t.records_out;
      m.bytes_out += t.bytes_out;
      for (std::size_t i = 0; i < t.op_seconds.size() && i < plan.ops.size(); ++i) per_op[plan.ops[i].name] += t.op_seconds[i];
    }
    for (const auto& op : plan.ops) {
      if (per_op.count(op.name)) {
        m.stage_seconds.emplace_back(op.name, per_op[op.name]);
        per_op.erase(op.name);
      }
    }
    if (plan.ops.back().kind == OpKind::Reduce) {
      const auto& op = plan.ops.back();
      result.reduced = reduce_partitions(registry_.at(op.name, plan.backend).combine, op.config,
                                         collect_partitions(result.dataset));
    }
    m.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    return result;
  }

  BinaryRecord reduce_deterministic(const DatasetRef& ds, const std::string& combiner, const BinaryRecord& config) {
    const auto& impl = registry_.at(combiner, SlotKind::Cpu);
    if (impl.kind != OpKind::Reduce) throw Error(Errc::UnknownOp, combiner + " is not a combiner");
    return reduce_partitions(impl.combine, config, collect_partitions(ds));
  }

  void drop_caches() {
    for (int id : live_ids()) request(id, proto::kDrop);
  }

  double since_epoch() const { return std::chrono::duration<double>(Clock::now() - epoch_).count(); }

  void kill_all(const std::vector<pid_t>& pids) {
    for (pid_t p : pids) {
      ::kill(p, SIGKILL);
      int status;
      ::waitpid(p, &status, 0);
    }
    ::close(listen_fd_);
    listen_fd_ = -1;
    stopped_ = true;
  }

  ClusterConfig config_;
  const OpRegistry& registry_;
  std::string session_;
  bool owns_state_dir_ = false;
  std::unique_ptr<storage::BackingStore> backing_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  Clock::time_point epoch_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stopped_ = false;
  std::vector<WorkerHandle> workers_;
  std::map<std::uint64_t, proto::TaskOutcome> outcomes_;
  std::map<std::int64_t, BinaryRecord> replies_;
  std::map<std::string, Lineage> lineage_;
  std::map<std::string, int> location_;  // block key -> worker caching it
  std::vector<TaskEvent> events_;
  std::uint64_t ingest_bytes_ = 0;
  std::uint64_t next_task_ = 1;
  std::int64_t next_req_ = 1;
  std::uint64_t next_dataset_ = 0;
  std::uint64_t next_job_ = 0;
};

std::unique_ptr<Cluster> Cluster::start(const ClusterConfig& config, const OpRegistry& registry) {
  auto impl = std::make_unique<Impl>(config, registry);
  impl->start();
  return std::unique_ptr<Cluster>(new Cluster(std::move(impl)));
}

Cluster::Cluster(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Cluster::~Cluster() = default;

DatasetRef Cluster::ingest(const std::string& glob_pattern, const Partitioner& partitioner) {
  return impl_->ingest(glob_pattern, partitioner);
}

DatasetRef Cluster::create_dataset(const std::vector<std::vector<BinaryRecord>>& partitions, const std::string& name) {
  return impl_->create_dataset(partitions, name);
}

JobResult Cluster::submit(const StagePlan& plan) { return impl_->submit(plan); }

std::vector<BinaryRecord> Cluster::collect(const DatasetRef& ds) {
  std::vector<BinaryRecord> out;
  for (auto& p : impl_->collect_partitions(ds)) {
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return out;
}

std::vector<std::vector<BinaryRecord>> Cluster::collect_partitions(const DatasetRef& ds) {
  return impl_->collect_partitions(ds);
}

BinaryRecord Cluster::reduce_deterministic(const DatasetRef& ds, const std::string& combiner,
                                           const BinaryRecord& config) {
  return impl_->reduce_deterministic(ds, combiner, config);
}

void Cluster::drop_caches() { impl_->drop_caches(); }

storage::StoreStats Cluster::storage_stats() { return impl_->gather_stats(); }

std::vector<TaskEvent> Cluster::event_log() const {
  std::lock_guard lock(impl_->mu_);
  return impl_->events_;
}

int Cluster::live_workers() const { return static_cast<int>(impl_->live_ids().size()); }

int Cluster::worker_count() const { return impl_->config_.workers; }

void Cluster::kill_worker(int worker_id) {
  pid_t pid;
  {
    std::lock_guard lock(impl_->mu_);
    pid = impl_->workers_.at(worker_id).pid;
  }
  ::kill(pid, SIGKILL);
  std::unique_lock lock(impl_->mu_);
  impl_->cv_.wait(lock, [&] { return !impl_->workers_.at(worker_id).alive; });
}

std::vector<pid_t> Cluster::worker_pids() const {
  std::lock_guard lock(impl_->mu_);
  std::vector<pid_t> out;
  for (const auto& w : impl_->workers_) out.push_back(w.pid);
  return out;
}

std::uint64_t Cluster::ingest_bytes() const {
  std::lock_guard lock(impl_->mu_);
  return impl_->ingest_bytes_;
}

const ClusterConfig& Cluster::config() const { return impl_->config_; }

fs::path Cluster::backing_dir() const { return impl_->backing_->dir(); }

void Cluster::shutdown() { impl_->shutdown(); }

int peak_concurrency(const std::vector<TaskEvent>& events, SlotKind kind) {
  int now = 0, peak = 0;
  for (const auto& e : events) {
    if (e.kind != kind) continue;
    now += e.start ? 1 : -1;
    peak = std::max(peak, now);
  }
  return peak;
}

}  // namespace adcloud::engine
