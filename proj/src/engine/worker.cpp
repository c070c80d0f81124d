// Worker process: executes RUN requests from the driver against its own
// tiered store and answers FETCH/STATS/DROP.

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <list>
#include <cstdlib>
#include <map>
#include <thread>

#include "adcloud/binstream/process.hpp"
#include "adcloud/engine/cluster.hpp"
#include "adcloud/error.hpp"
#include "adcloud/storage/backing_store.hpp"
#include "protocol.hpp"

namespace adcloud::engine {

namespace proto = protocol;
using binstream::Bytes;
using binstream::FieldValue;

namespace {

struct WorkerArgs {
  int id = 0;
  std::uint16_t port = 0;
  std::filesystem::path cache_dir;
  std::filesystem::path backing_dir;
  std::uint64_t mem = 0, disk1 = 0, disk2 = 0;
};

std::string intermediate_id(const std::string& ds, std::size_t op) { return ds + ".op" + std::to_string(op); }

class Worker {
 public:
  Worker(const WorkerArgs& a, const OpRegistry& registry)
      : args_(a),
        registry_(registry),
        store_(storage::TierConfig::standard(a.cache_dir, a.backing_dir, a.mem, a.disk1, a.disk2)),
        conn_(proto::connect_loopback(a.port)) {}

  int run() {
    conn_.send(BinaryRecord{FieldValue::utf8(proto::kHello), FieldValue::int64(args_.id),
                            FieldValue::int64(::getpid())});
    while (auto msg = conn_.receive()) {
      const auto& type = (*msg)[0].as_utf8();
      if (type == proto::kRun) {
        tasks_.remove_if([](const Task& t) { return t.done->load(); });
        auto done = std::make_shared<std::atomic<bool>>(false);
        tasks_.push_back(Task{std::jthread([this, done, m = std::move(*msg)] {
                                run_task(proto::decode_run(m));
                                done->store(true);
                              }),
                              done});
      } else if (type == proto::kShutdown) {
        break;
      } else {
        handle_request(*msg);
      }
    }
    tasks_.clear();  // joins
    return 0;
  }

 private:
  void handle_request(const BinaryRecord& msg) {
    const auto& type = msg[0].as_utf8();
    const auto req = msg[1].as_int64();
    BinaryRecord reply{FieldValue::utf8(proto::kReply), FieldValue::int64(req)};
    if (type == proto::kFetch) {
      auto bytes = store_.try_get(msg[2].as_utf8());
      reply.fields.push_back(FieldValue::int64(bytes ? 1 : 0));
      reply.fields.push_back(FieldValue::bytes(bytes ? std::move(*bytes) : Bytes{}));
    } else if (type == proto::kStats) {
      auto s = proto::encode_stats(store_.stats());
      reply.fields.insert(reply.fields.end(), s.fields.begin(), s.fields.end());
    } else if (type == proto::kDrop) {
      store_.drop_caches();
    }
    send(reply);
  }

  void send(const BinaryRecord& r) {
    try {
      conn_.send(r);
    } catch (const Error&) {
      // driver is gone; the receive loop will notice
    }
  }

  std::vector<BinaryRecord> load(const std::string& key) {
    auto bytes = store_.try_get(key);
    if (!bytes) throw Error(Errc::MissingBlock, key);
    return binstream::deserialize_partition_bytes(*bytes);
  }

  void run_task(const proto::TaskSpec& t) {
    proto::TaskOutcome out;
    out.task_id = t.task_id;
    try {
      const std::size_t p = t.partition;
      const auto n = t.segments.size();
      // Resume from the deepest intermediate that survives (cache or backing).
      std::size_t first = 0;
      std::vector<BinaryRecord> records;
      bool have = false;
      for (std::size_t s = n - 1; s-- > 0;) {
        if (auto bytes = store_.try_get(block_key(t.segments[s].out_dataset, p))) {
          records = binstream::deserialize_partition_bytes(*bytes);
          first = s + 1;
          have = true;
          break;
        }
      }
      if (!have) records = load(block_key(t.root_dataset, p));

      for (std::size_t s = first; s < n; ++s) {
        const auto& seg = t.segments[s];
        const bool last_segment = s + 1 == n;
        for (std::size_t i = 0; i < seg.ops.size(); ++i) {
          const auto& op = seg.ops[i];
          const auto& impl = registry_.at(op.name, t.backend);
          const auto start = std::chrono::steady_clock::now();
          if (impl.kind == OpKind::Reduce) {
            if (!records.empty()) {
              BinaryRecord acc = records.front();
              for (std::size_t k = 1; k < records.size(); ++k) acc = impl.combine(op.config, acc, records[k]);
              records.assign(1, std::move(acc));
            }
          } else {
            TaskContext ctx(p, op.config, t.backend, args_.id, &store_.backing());
            records = impl.partition(ctx, std::move(records));
          }
          if (last_segment) {
            out.op_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
          }
          if (i + 1 < seg.ops.size()) {
            store_.put(block_key(intermediate_id(seg.out_dataset, i), p), binstream::serialize_partition_bytes(records),
                       false);
          }
        }
        auto bytes = binstream::serialize_partition_bytes(records);
        if (last_segment) {
          out.records_out = records.size();
          out.bytes_out = bytes.size();
        }
        store_.put(block_key(seg.out_dataset, p), std::move(bytes), seg.persist);
        out.cached_datasets.push_back(seg.out_dataset);
      }
      store_.flush_barrier();
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
    send(proto::encode_done(out));
  }

  WorkerArgs args_;
  const OpRegistry& registry_;
  storage::TieredStore store_;
  proto::Connection conn_;
  struct Task {
    std::jthread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  std::list<Task> tasks_;
};

}  // namespace

std::optional<int> run_worker_if_requested(int argc, char** argv, const OpRegistry& registry) {
  if (argc < 2 || std::string(argv[1]) != "--adcloud-worker") return std::nullopt;
  std::map<std::string, std::string> kv;
  for (int i = 2; i + 1 < argc; i += 2) kv[argv[i]] = argv[i + 1];
  try {
    WorkerArgs a;
    a.id = std::stoi(kv.at("--id"));
    a.port = static_cast<std::uint16_t>(std::stoi(kv.at("--port")));
    a.cache_dir = kv.at("--cache");
    a.backing_dir = kv.at("--backing");
    a.mem = std::stoull(kv.at("--mem"));
    a.disk1 = std::stoull(kv.at("--disk1"));
    a.disk2 = std::stoull(kv.at("--disk2"));
    binstream::ignore_sigpipe();
    Worker w(a, registry);
    const int rc = w.run();
    return rc;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "adcloud worker: %s\n", e.what());
    return 1;
  }
}

}  // namespace adcloud::engine
