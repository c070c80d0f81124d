// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Criterion 3 (scaling) lives in scaling.cpp.

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "adcloud/binstream/bag_format.hpp"
#include "adcloud/binstream/bridge.hpp"
#include "adcloud/binstream/stream.hpp"
#include "adcloud/engine/cluster.hpp"
#include "adcloud/error.hpp"
#include "adcloud/mapgen/icp.hpp"
#include "adcloud/mapgen/pipeline.hpp"
#include "adcloud/mapgen/simulator.hpp"
#include "adcloud/mapgen/stitch.hpp"
#include "adcloud/simharness/simharness.hpp"
#include "adcloud/storage/tiered_store.hpp"
#include "adcloud/trainer/trainer.hpp"
#include "support/lru_model.hpp"
#include "support/random_records.hpp"
#include "support/temp_dir.hpp"

using namespace adcloud;
using binstream::BinaryRecord;
using binstream::Bytes;
using binstream::ByteView;
using Clock = std::chrono::steady_clock;

namespace {

const std::filesystem::path kAlgo = ADCLOUD_ALGO_PATH;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void fail(const std::string& why) {
    if (pass) detail.str("");
    pass = false;
    detail << why << "; ";
  }
  void check(bool ok, const std::string& why) {
    if (!ok) fail(why);
  }
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::unique_ptr<engine::Cluster> make_cluster(int workers, int cpu = 2) {
  engine::ClusterConfig c;
  c.workers = workers;
  c.slots.cpu = cpu;
  return engine::Cluster::start(c);
}

bool defined_truncation(Errc e) {
  return e == Errc::TruncatedFrame || e == Errc::TruncatedField || e == Errc::TruncatedRecord;
}

template <typename F>
std::optional<Errc> error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// ---- 1. binstream conformance

void criterion1(Verdict& v) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  const auto records = testing::random_records(rng, 10'000);

  std::size_t field_bytes = 0;
  for (const auto& r : records) {
    const Bytes enc = binstream::encode_record(r);
    field_bytes += enc.size();
    const auto dec = binstream::decode_record(enc);
    if (!(dec.value == r) || dec.consumed != enc.size() || binstream::encode_record(dec.value) != enc) {
      v.fail("record codec round trip");
      break;
    }
  }
  const Bytes stream = binstream::serialize_partition_bytes(records);
  auto ch = binstream::spawn_bridge(kAlgo, {"identity"});
  const auto echoed = ch.transform(records);
  v.check(ch.wait() == 0, "identity child exit status");
  v.check(echoed == records, "bridge echo differs");
  v.check(binstream::serialize_partition_bytes(echoed) == stream, "re-serialized stream differs");
  v.check(binstream::deserialize_partition_bytes(stream) == records, "stream round trip");

  // Every cut of a valid stream, and of every encoded record in a sample.
  const auto small = testing::random_records(rng, 100);
  const Bytes s = binstream::serialize_partition_bytes(small);
  std::size_t cuts = 0;
  for (std::size_t cut = 0; cut < s.size(); ++cut, ++cuts) {
    const auto e = error_of([&] { binstream::deserialize_partition_bytes(ByteView(s.data(), cut)); });
    if (!e || !defined_truncation(*e)) {
      v.fail("stream cut " + std::to_string(cut) + (e ? " gave " + std::string(errc_name(*e)) : " decoded"));
      break;
    }
  }
  for (std::size_t i = 0; i < 1000; ++i) {
    const Bytes enc = binstream::encode_record(records[i]);
    for (std::size_t cut = 0; cut < enc.size(); ++cut, ++cuts) {
      const auto e = error_of([&] { binstream::decode_record(ByteView(enc.data(), cut)); });
      if (!e || !defined_truncation(*e)) {
        v.fail("record " + std::to_string(i) + " cut " + std::to_string(cut));
        i = 1000;
        break;
      }
    }
  }
  const double secs = since(t0);
  v.check(secs < 30, "runtime over 30 s");
  if (v.pass) {
    v.detail << "10000 records (" << field_bytes << " B) byte-exact through the identity child; " << cuts
             << " truncations all defined errors; " << secs << " s";
  }
}

// ---- 2. bridge equivalence on a 100 MB bag

BinaryRecord flip_even_oracle(const BinaryRecord& r) {
  if (r[1].as_int64() % 2 != 0) return r;
  BinaryRecord out = r;
  auto p = r[2].as_bytes();
  if (!p.empty()) p[0] ^= 0xFF;
  out.fields[2] = binstream::FieldValue::bytes(std::move(p));
  return out;
}

void criterion2(Verdict& v) {
  testing::TempDir dir("accept2");
  sim::SynthSpec spec;
  spec.topics = {"lidar", "camera", "radar"};
  spec.rate_hz = 40;
  spec.duration_s = 20;
  spec.payload_bytes = 44'000;
  spec.start_ns = 1'700'000'000'000'000'001;  // odd start: flip-even touches a mix
  const auto path = dir / "big.bag";
  sim::synth_bag(spec, path);
  const auto size = std::filesystem::file_size(path);
  v.check(size >= 100'000'000, "bag smaller than 100 MB");
  const auto records = sim::read_bag_checked(path);

  auto id = binstream::spawn_bridge(kAlgo, {"identity"});
  const auto a = id.transform(records);
  v.check(id.wait() == 0, "identity exit status");
  v.check(a == records, "identity output differs from input");

  std::vector<BinaryRecord> oracle;
  oracle.reserve(records.size());
  std::size_t flipped = 0;
  for (const auto& r : records) {
    oracle.push_back(flip_even_oracle(r));
    flipped += !(oracle.back() == r);
  }
  auto fl = binstream::spawn_bridge(kAlgo, {"flip-even"});
  const auto b = fl.transform(records);
  v.check(fl.wait() == 0, "flip-even exit status");
  v.check(b == oracle, "flip-even output differs from oracle");
  v.check(flipped > 0 && flipped < records.size(), "flip oracle degenerate");
  if (v.pass) {
    v.detail << size << " B bag, " << records.size() << " records; identity == input, flip-even == oracle ("
             << flipped << " flipped)";
  }
}

// ---- 4. worker-count invariance

void criterion4(Verdict& v) {
  testing::TempDir dir("accept4");
  sim::SynthSpec spec;
  spec.topics = {"lidar", "imu"};
  spec.duration_s = 30;
  const auto recs = sim::synth_records(spec);
  std::vector<std::vector<BinaryRecord>> nums(7);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (auto& p : nums) {
    for (int i = 0; i < 50; ++i) p.push_back(BinaryRecord{binstream::FieldValue::float64(u(rng)),
                                                          binstream::FieldValue::int64(static_cast<std::int64_t>(rng()))});
  }
  auto data = trainer::synth_logistic(301, 4, 9);
  trainer::TrainConfig tc;
  tc.model = trainer::Model::LogisticRegression;
  tc.learning_rate = 0.7;
  tc.iterations = 12;
  tc.shards = 4;

  std::optional<nlohmann::json> report0;
  std::optional<sim::SimReport> flip0;
  std::optional<BinaryRecord> reduce0;
  std::optional<trainer::ParameterSet> params0;
  for (int w : {1, 2, 4}) {
    auto c = make_cluster(w);
    auto ds = c->create_dataset(engine::partition_records(recs, {recs.size()}, engine::Partitioner::by_record_count(40)));
    auto rep = sim::replay(*c, ds, {kAlgo, {"flip-even"}}, ds);
    auto j = sim::to_json(rep);
    for (const char* k : {"wall_seconds", "workers", "retries", "partition_seconds"}) j.erase(k);
    auto red = c->reduce_deterministic(c->create_dataset(nums), "sum");
    auto res = trainer::train(*c, tc, trainer::shard_dataset(*c, data, 4), 4);
    if (!report0) {
      report0 = j, flip0 = rep, reduce0 = red, params0 = res.params;
      continue;
    }
    v.check(j == *report0 && rep.same_outcome(*flip0), "replay report differs at " + std::to_string(w) + " workers");
    v.check(red == *reduce0, "reduce differs at " + std::to_string(w) + " workers");
    v.check(res.params == *params0, "params differ at " + std::to_string(w) + " workers");
  }
  if (v.pass) {
    v.detail << "replay {records " << flip0->records_replayed << ", mismatches " << flip0->mismatches
             << "}, reduce sum, 12-iteration logistic params identical for workers 1,2,4";
  }
}

// ---- 5. storage

Bytes payload(std::size_t size, std::uint64_t seed) {
  Bytes b(size);
  std::mt19937_64 rng(seed);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

void criterion5(Verdict& v) {
  testing::TempDir dir("accept5");
  const std::vector<std::uint64_t> caps = {4000, 12000, 30000};
  {
    storage::TieredStore store(
        storage::TierConfig::standard(dir / "cache", dir / "backing", caps[0], caps[1], caps[2]));
    testing::LruModel model(caps);
    std::mt19937_64 rng(2025);
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> last;  // size, content
    std::map<std::string, bool> last_persisted;
    int op = 0;
    for (; op < 1000 && v.pass; ++op) {
      const std::string key = "blk" + std::to_string(std::uniform_int_distribution<int>(0, 99)(rng));
      if (std::bernoulli_distribution(0.5)(rng)) {
        const std::uint64_t size = std::uniform_int_distribution<std::uint64_t>(1, 5000)(rng);
        const bool persist = std::bernoulli_distribution(0.3)(rng);
        const std::uint64_t content = rng();
        if (model.put(key, size, persist, content)) {
          store.put(key, payload(size, content), persist);
          last[key] = {size, content};
          last_persisted[key] = persist;
        } else {
          v.check(error_of([&] { store.put(key, payload(size, content), persist); }).has_value(),
                  "oversized put accepted");
        }
      } else {
        const auto expected = model.get(key);
        const auto got = store.try_get(key);
        v.check(expected.has_value() == got.has_value(), "presence differs at op " + std::to_string(op));
        if (expected && got) v.check(*got == payload(last.at(key).first, *expected), "content at op " + std::to_string(op));
      }
      const auto s = store.stats();
      for (std::size_t t = 0; t < caps.size(); ++t) {
        const auto& c = s.tiers[t].second;
        const auto& m = model.tier(t);
        v.check(c.bytes_resident == m.resident && c.hits == m.hits && c.misses == m.misses &&
                    c.bytes_evicted == m.evicted && c.bytes_written == m.written && c.bytes_read == m.read,
                "tier " + std::to_string(t) + " counters differ at op " + std::to_string(op));
      }
      for (const auto& [k, _] : last) v.check(store.residency(k) == model.residency(k), "residency of " + k);
    }
    store.flush_barrier();
    const auto s = store.stats();
    v.check(s.tier("BACKING").bytes_persisted == model.durable_bytes(), "durable bytes");
    store.drop_caches();
    std::size_t checked = 0;
    for (const auto& [k, persisted] : last_persisted) {
      if (!persisted) continue;
      ++checked;
      v.check(store.get(k) == payload(last.at(k).first, last.at(k).second), "persisted block " + k + " differs");
    }
    if (v.pass) v.detail << "1000 ops match the LRU model; " << checked << " persisted blocks byte-identical after drop; ";
  }

  // Latency: MEM hits vs reads that fall through to the backing store.
  storage::TieredStore store(
      storage::TierConfig::standard(dir / "cache2", dir / "backing2", 64ull << 20, 128ull << 20, 256ull << 20));
  const int n = 16;
  for (int i = 0; i < n; ++i) store.put("mb" + std::to_string(i), payload(1 << 20, i), true);
  store.flush_barrier();
  double mem = 0, backing = 0;
  const int rounds = 5;
  for (int r = 0; r < rounds; ++r) {
    store.drop_caches();
    for (int i = 0; i < n; ++i) {
      const auto t0 = Clock::now();
      const auto b = store.get("mb" + std::to_string(i));
      backing += since(t0);
      v.check(b.size() == (1u << 20), "backing read size");
    }
    for (int i = 0; i < n; ++i) {
      v.check(store.residency("mb" + std::to_string(i)) == std::optional<std::size_t>(0), "block not promoted to MEM");
      const auto t0 = Clock::now();
      const auto b = store.get("mb" + std::to_string(i));
      mem += since(t0);
    }
  }
  mem /= n * rounds;
  backing /= n * rounds;
  v.check(mem < backing, "MEM hit not faster than backing read");
  if (v.pass) v.detail << "1 MB mean latency MEM " << mem * 1e6 << " us vs backing " << backing * 1e6 << " us";
}

// ---- 6. trainer

double mean_loss(trainer::Model m, const std::vector<double>& w, const std::vector<trainer::Sample>& data) {
  trainer::ExactSum s;
  for (const auto& x : data) s.add(trainer::sample_loss(m, w, x));
  return s.value() / static_cast<double>(data.size());
}

void criterion6(Verdict& v) {
  using namespace trainer;
  std::mt19937_64 rng(17);
  double worst = 0;
  for (Model m : {Model::LinearRegression, Model::LogisticRegression}) {
    for (int c = 0; c < 100; ++c) {
      const std::size_t d = 1 + rng() % 6;
      std::uniform_real_distribution<double> u(-2, 2);
      std::vector<Sample> shard(1 + rng() % 20);
      for (auto& s : shard) {
        for (std::size_t j = 0; j < d; ++j) s.x.push_back(u(rng));
        s.y = m == Model::LinearRegression ? u(rng) : static_cast<double>(rng() % 2);
      }
      std::uniform_real_distribution<double> uw(-1.5, 1.5);
      std::vector<double> w(d);
      for (auto& x : w) x = uw(rng);
      const auto g = local_gradient(m, {0, w}, shard, 0).gradient;
      double num = 0, den = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double h = 1e-5;
        auto wp = w, wm = w;
        wp[j] += h;
        wm[j] -= h;
        const double fd = (mean_loss(m, wp, shard) - mean_loss(m, wm, shard)) / (2 * h);
        num += (fd - g[j]) * (fd - g[j]);
        den += g[j] * g[j];
      }
      worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-3));
    }
  }
  v.check(worst <= 1e-6, "finite-difference relative error " + std::to_string(worst));

  auto data = synth_linear(500, 2.0, 1.0, 0.05, 21);
  long double sxx = 0, sx = 0, sxy = 0, sy = 0, n = static_cast<long double>(data.size());
  for (const auto& s : data) {
    sxx += s.x[0] * s.x[0];
    sx += s.x[0];
    sxy += s.x[0] * s.y;
    sy += s.y;
  }
  const long double det = sxx * n - sx * sx;
  const double slope = static_cast<double>((sxy * n - sx * sy) / det);
  const double icpt = static_cast<double>((sxx * sy - sx * sxy) / det);
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.iterations = 80;
  cfg.shards = 3;
  auto c = make_cluster(2);
  const auto res = train(*c, cfg, shard_dataset(*c, data, 3), 2);
  const double dw = std::max(std::abs(res.params.values[0] - slope), std::abs(res.params.values[1] - icpt));
  v.check(dw <= 1e-3, "linear weights off closed form by " + std::to_string(dw));
  v.check(res.params == single_node_oracle(cfg, data).params, "distributed != single-node oracle");

  std::vector<std::string> lines;
  for (const auto& s : synth_linear(400, 2.0, 1.0, 0.02, 8)) lines.push_back(sample_to_csv(s));
  TrainConfig pc;
  pc.iterations = 5;
  pc.shards = 4;
  pc.learning_rate = 0.5;
  auto raw = shard_csv_dataset(*c, lines, 4);
  const auto piped = train(*c, pc, raw, 2, TrainOptions{true, true, {}});
  const auto staged = train(*c, pc, raw, 2, TrainOptions{false, true, {}});
  v.check(piped.params == staged.params, "pipelined and staged params differ");
  v.check(piped.metrics.bytes_persisted < staged.metrics.bytes_persisted, "pipelined did not persist fewer bytes");
  if (v.pass) {
    v.detail << "worst FD rel err " << worst << "; fit (" << res.params.values[0] << ", " << res.params.values[1]
             << ") vs closed form (" << slope << ", " << icpt << "); oracle bit-exact; persisted pipelined "
             << piped.metrics.bytes_persisted << " B < staged " << staged.metrics.bytes_persisted << " B";
  }
}

// ---- 7. ICP

mapgen::LidarScan random_cloud(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> ux(-5, 5), uy(-4, 4), uz(-2, 2), ur(0, 1);
  mapgen::LidarScan s{0, {}};
  for (std::size_t i = 0; i < n; ++i) s.points.push_back({ux(rng), uy(rng), uz(rng), ur(rng)});
  return s;
}

void criterion7(Verdict& v) {
  using namespace mapgen;
  const auto t0 = Clock::now();
  constexpr double kDeg = std::numbers::pi / 180;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ang(-10 * kDeg, 10 * kDeg), u(-1, 1);
  IcpParams p;
  p.max_correspondence_distance = 100;
  p.max_iterations = 100;
  double worst_rot = 0, worst_trans = 0;
  for (int c = 0; c < 100; ++c) {
    const auto src = random_cloud(rng, 500);
    RigidTransform truth;
    truth.rotation = (Eigen::AngleAxisd(ang(rng), Eigen::Vector3d::UnitZ()) *
                      Eigen::AngleAxisd(ang(rng) / 4, Eigen::Vector3d::UnitX()))
                         .toRotationMatrix();
    Eigen::Vector3d dir(u(rng), u(rng), u(rng));
    truth.translation = dir.normalized() * (0.5 * std::abs(u(rng)));
    const auto r = icp_align(src, to_world(src, truth), RigidTransform::identity(), p);
    worst_rot = std::max(worst_rot, r.transform.compose(truth.inverse()).angle());
    worst_trans = std::max(worst_trans, (r.transform.translation - truth.translation).norm());
    for (std::size_t i = 1; i < r.residual_history.size(); ++i) {
      if (r.residual_history[i] > r.residual_history[i - 1]) {
        v.fail("residual increased in case " + std::to_string(c));
        break;
      }
    }
  }
  v.check(worst_rot < 1e-3 && worst_trans < 1e-3, "planted transform not recovered");

  std::size_t queries = 0;
  for (int c = 0; c < 50; ++c) {
    const auto pts = positions(random_cloud(rng, 1 + rng() % 200));
    const KdTree tree(pts);
    for (const auto& q : positions(random_cloud(rng, 100))) {
      const auto a = tree.nearest(q), b = brute_force_nearest(pts, q);
      ++queries;
      if (a.index != b.index || a.dist2 != b.dist2) {
        v.fail("k-d tree differs from brute force in cloud " + std::to_string(c));
        c = 50;
        break;
      }
    }
  }
  const double secs = since(t0);
  v.check(secs < 120, "runtime over 2 min");
  if (v.pass) {
    v.detail << "100 cases: worst rotation err " << worst_rot << " rad, translation " << worst_trans
             << " m; residuals non-increasing; " << queries << " k-d queries == brute force; " << secs << " s";
  }
}

// ---- 8. mapgen end to end

void criterion8(Verdict& v) {
  using namespace mapgen;
  testing::TempDir dir("accept8");
  const auto drive = simulate_drive();
  const auto files = write_drive(drive, dir.path());
  auto c = make_cluster(2);
  auto cfg = [&](bool pipelined) {
    MapConfig m;
    m.odom_bag = files.odom;
    m.imu_bag = files.imu;
    m.gps_bag = files.gps;
    m.lidar_bag = files.lidar;
    m.labels = files.labels;
    m.initial = drive.truth.front();
    m.pipelined = pipelined;
    m.out = dir / (pipelined ? "pipelined.adhm" : "staged.adhm");
    return m;
  };
  const auto piped = run_map_pipeline(*c, cfg(true));
  const auto staged = run_map_pipeline(*c, cfg(false));
  const auto fa = binstream::read_file(dir / "pipelined.adhm");
  v.check(fa == binstream::read_file(dir / "staged.adhm"), "pipelined and staged map files differ");
  v.check(piped.map_bytes == fa, "returned bytes differ from file");
  const auto dead = fuse(drive.odom, drive.imu, drive.gps, drive.truth.front(), {.use_gps = false});
  const double rms_fused = position_rms(piped.fused, drive.truth);
  const double rms_dead = position_rms(dead, drive.truth);
  v.check(rms_fused < rms_dead, "corrected RMS not below propagated RMS");
  const double cell = map_header(decode_map(fa)).at("cell_size").get<double>();
  v.check(cell == 0.05, "header cell_size " + std::to_string(cell));
  if (v.pass) {
    v.detail << fa.size() << " B map identical in both modes (" << drive.scans.size() << " scans); RMS corrected "
             << rms_fused << " m < propagated " << rms_dead << " m; header cell_size " << cell;
  }
}

// ---- 9. fault injection

void criterion9(Verdict& v) {
  testing::TempDir dir("accept9");
  sim::SynthSpec s;
  s.duration_s = 30;
  auto recs = sim::synth_records(s);
  auto c = make_cluster(2);
  auto ds = c->create_dataset(engine::partition_records(recs, {recs.size()}, engine::Partitioner::by_record_count(40)));
  const auto clean = sim::replay(*c, ds, {kAlgo, {"identity"}}, ds);
  const auto marker = (dir / "crash").string();
  std::ofstream(marker) << "x";
  const auto crashed = sim::replay(*c, ds, {kAlgo, {"crash-once", marker, "7"}}, ds);
  v.check(!std::filesystem::exists(marker), "replay child was never killed");
  v.check(crashed.retries == 1, "replay retries " + std::to_string(crashed.retries));
  v.check(crashed.same_outcome(clean), "replay report changed by the crash");

  auto data = trainer::synth_logistic(120, 3, 12);
  trainer::TrainConfig cfg;
  cfg.model = trainer::Model::LogisticRegression;
  cfg.iterations = 6;
  cfg.shards = 3;
  auto tc = make_cluster(3);
  auto tds = trainer::shard_dataset(*tc, data, 3);
  const auto ok = trainer::train(*tc, cfg, tds, 3);
  const auto kill = (dir / "kill").string();
  std::ofstream(kill) << "x";
  trainer::TrainOptions opt;
  opt.fault = {{2, kill}};
  const auto faulted = trainer::train(*tc, cfg, tds, 3, opt);
  v.check(!std::filesystem::exists(kill), "gradient worker was never killed");
  v.check(faulted.metrics.retries == 1, "train retries " + std::to_string(faulted.metrics.retries));
  v.check(faulted.params == ok.params && faulted.loss == ok.loss, "trained params changed by the kill");
  if (v.pass) {
    v.detail << "crashed replay child retried once, report unchanged; killed gradient worker ("
             << tc->live_workers() << "/3 left) retried once, params bit-identical";
  }
}

}  // namespace

int main(int argc, char** argv) {
  engine::register_builtin_ops();
  sim::register_sim_ops();
  trainer::register_trainer_ops();
  mapgen::register_map_ops();
  if (auto rc = engine::run_worker_if_requested(argc, argv)) return *rc;

  const std::vector<std::pair<int, std::function<void(Verdict&)>>> criteria = {
      {1, criterion1}, {2, criterion2}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9},
  };
  std::optional<int> only;
  if (argc > 1) only = std::atoi(argv[1]);
  int failures = 0;
  for (const auto& [n, fn] : criteria) {
    if (only && *only != n) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.fail(std::string("exception: ") + e.what());
    }
    failures += !v.pass;
    std::cout << "CRITERION " << n << ": " << (v.pass ? "PASS" : "FAIL") << " [" << since(t0) << " s] "
              << v.detail.str() << std::endl;
  }
  std::cout << "criterion 3 (scaling) is reported by the scaling test" << std::endl;
  return failures == 0 ? 0 : 1;
}
