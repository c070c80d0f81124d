// Scaling trend: CPU-bound replay (200 us of busy work per record) on 1, 2
// and 4 workers. The 1-vs-4 speedup must reach 2.5x on a machine with at
// least 4 cores; on smaller hosts the table is still printed and the test
// exits with the skip code.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <thread>

#include "adcloud/engine/cluster.hpp"
#include "adcloud/simharness/simharness.hpp"

using namespace adcloud;

namespace {

constexpr int kSkip = 77;
const std::filesystem::path kAlgo = ADCLOUD_ALGO_PATH;

}  // namespace

int main(int argc, char** argv) {
  sim::register_sim_ops();
  if (auto rc = engine::run_worker_if_requested(argc, argv)) return *rc;

  sim::SynthSpec spec;
  spec.topics = {"lidar", "camera"};
  spec.rate_hz = 1000;
  spec.duration_s = 10;
  spec.payload_bytes = 64;
  const auto recs = sim::synth_records(spec);

  const unsigned cores = std::thread::hardware_concurrency();
  std::map<int, double> wall;
  std::optional<sim::SimReport> first;
  bool same = true;
  for (int w : {1, 2, 4}) {
    engine::ClusterConfig cfg;
    cfg.workers = w;
    cfg.slots.cpu = 1;
    auto c = engine::Cluster::start(cfg);
    auto ds = c->create_dataset(engine::partition_records(recs, {recs.size()}, engine::Partitioner::by_record_count(500)));
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = sim::replay(*c, ds, {kAlgo, {"busy", "200"}});
    wall[w] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!first) first = rep;
    same = same && rep.same_outcome(*first);
  }

  std::printf("records %zu, busy 200 us/record, host cores %u\n", recs.size(), cores);
  std::printf("%8s %10s %8s\n", "workers", "seconds", "speedup");
  for (const auto& [w, s] : wall) std::printf("%8d %10.3f %8.2f\n", w, s, wall[1] / s);
  const double speedup = wall[1] / wall[4];

  if (!same || first->records_replayed != recs.size()) {
    std::printf("CRITERION 3: FAIL replay outcome differs across worker counts\n");
    return 1;
  }
  if (cores < 4) {
    std::printf("CRITERION 3: SKIP host has %u core(s), needs >= 4 (measured 1-vs-4 speedup %.2fx)\n", cores, speedup);
    return kSkip;
  }
  const bool pass = speedup >= 2.5;
  std::printf("CRITERION 3: %s 1-vs-4 speedup %.2fx (threshold 2.5x)\n", pass ? "PASS" : "FAIL", speedup);
  return pass ? 0 : 1;
}
