#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "adcloud/error.hpp"
#include "adcloud/trainer/trainer.hpp"
#include "support/temp_dir.hpp"

using namespace adcloud;
using namespace adcloud::trainer;
using adcloud::testing::TempDir;

namespace {

std::unique_ptr<engine::Cluster> make_cluster(int workers) {
  engine::ClusterConfig c;
  c.workers = workers;
  c.slots.cpu = 2;
  return engine::Cluster::start(c);
}

double mean_loss(Model m, const std::vector<double>& w, const std::vector<Sample>& data) {
  ExactSum s;
  for (const auto& x : data) s.add(sample_loss(m, w, x));
  return s.value() / static_cast<double>(data.size());
}

std::vector<Sample> random_shard(std::mt19937_64& rng, Model m, std::size_t d) {
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<Sample> shard(1 + rng() % 20);
  for (auto& s : shard) {
    for (std::size_t j = 0; j < d; ++j) s.x.push_back(u(rng));
    s.y = m == Model::LinearRegression ? u(rng) : static_cast<double>(rng() % 2);
  }
  return shard;
}

storage::TierConfig ps_tiers(const TempDir& d) {
  return storage::TierConfig::standard(d / "cache", d / "backing", 1 << 20, 1 << 22, 1 << 24);
}

}  // namespace

TEST(ExactSumTest, OrderAndGroupingIndependent) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> xs;
  for (int i = 0; i < 2000; ++i) xs.push_back(u(rng) * std::pow(10.0, static_cast<int>(rng() % 30) - 15));
  ExactSum a;
  for (double x : xs) a.add(x);
  std::shuffle(xs.begin(), xs.end(), rng);
  ExactSum b, c;
  for (std::size_t i = 0; i < xs.size(); ++i) (i % 3 ? b : c).add(xs[i]);
  b.merge(c);
  EXPECT_EQ(a.value(), b.value());
  // classic cancellation case
  ExactSum e;
  for (double x : {1e100, 1.0, -1e100}) e.add(x);
  EXPECT_EQ(e.value(), 1.0);
}

TEST(Shard, BalancedContiguousSplit) {
  auto data = synth_linear(10, 2, 1, 0, 1);
  auto shards = shard_data(data, 3);
  ASSERT_EQ(shards.size(), 3u);
  EXPECT_EQ(shards[0].size(), 4u);
  EXPECT_EQ(shards[1].size(), 3u);
  EXPECT_EQ(shards[2].size(), 3u);
  std::vector<Sample> joined;
  for (const auto& s : shards) joined.insert(joined.end(), s.begin(), s.end());
  ASSERT_EQ(joined.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(joined[i].x, data[i].x);
    EXPECT_EQ(joined[i].y, data[i].y);
  }
  EXPECT_EQ(shard_data(data, 1)[0].size(), 10u);
  EXPECT_THROW(shard_data({}, 2), Error);
}

TEST(Gradient, ZeroCase) {
  std::vector<Sample> shard{{{0.5, 1.0}, 0.0}, {{-0.3, 1.0}, 0.0}};
  auto u = local_gradient(Model::LinearRegression, {0, {0.0, 0.0}}, shard, 0);
  EXPECT_EQ(u.gradient, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(u.count, 2u);
}

TEST(Gradient, SingleSampleByHand) {
  auto u = local_gradient(Model::LinearRegression, {0, {0.0}}, {{{1.0}, 1.0}}, 0);
  EXPECT_EQ(u.gradient, std::vector<double>{-1.0});
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  for (Model m : {Model::LinearRegression, Model::LogisticRegression}) {
    double worst = 0;
    for (int c = 0; c < 100; ++c) {
      const std::size_t d = 1 + rng() % 6;
      auto shard = random_shard(rng, m, d);
      std::uniform_real_distribution<double> u(-1.5, 1.5);
      std::vector<double> w(d);
      for (auto& x : w) x = u(rng);
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
      const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-3);
      worst = std::max(worst, rel);
    }
    EXPECT_LE(worst, 1e-6) << to_string(m);
  }
}

TEST(Gradient, Errors) {
  try {
    local_gradient(Model::LinearRegression, {0, {0.0, 0.0}}, {{{1.0}, 1.0}}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionMismatch);
  }
  try {
    local_gradient(Model::LinearRegression, {0, {1e300}}, {{{1e300}, 0.0}}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteGradient);
  }
}

TEST(ParameterServerTest, PushStoresExactBlock) {
  TempDir d;
  ParameterServer ps(ps_tiers(d), {0, {0.25, -1.0}}, 2, 0.5);
  std::mt19937_64 rng(5);
  auto shard = random_shard(rng, Model::LinearRegression, 2);
  auto u = local_gradient(Model::LinearRegression, ps.current(), shard, 1);
  ps.push(u);
  auto back = ps.read_update(0, 1);
  EXPECT_EQ(back.to_record(), u.to_record());
  EXPECT_EQ(back.gradient, u.gradient);
  auto stale = u;
  stale.iteration = 3;
  try {
    ps.push(stale);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::StaleIteration);
  }
  try {
    ps.aggregate_and_broadcast();  // shard 0 missing
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingUpdate);
  }
}

TEST(ParameterServerTest, SingleShardIsPlainStep) {
  TempDir d;
  ParameterServer ps(ps_tiers(d), {0, {1.0, 2.0}}, 1, 0.5, 1);
  std::vector<Sample> shard{{{1.0, 1.0}, 0.0}};
  auto u = local_gradient(Model::LinearRegression, ps.current(), shard, 0);
  ps.push(u);
  auto next = ps.aggregate_and_broadcast();
  EXPECT_EQ(next.version, 1u);
  EXPECT_EQ(next.values, (std::vector<double>{1.0 - 0.5 * 3.0, 2.0 - 0.5 * 3.0}));
  EXPECT_EQ(ps.read_params(1), next);
  EXPECT_EQ(ps.read_params(0).values, (std::vector<double>{1.0, 2.0}));
  ps.store().flush_barrier();
  ps.store().drop_caches();
  ASSERT_TRUE(ps.read_checkpoint(1));
  EXPECT_EQ(*ps.read_checkpoint(1), next);
}

TEST(ParameterServerTest, ZeroGradientsKeepValues) {
  TempDir d;
  ParameterServer ps(ps_tiers(d), {0, {0.0, 0.0}}, 2, 0.5);
  for (std::size_t s = 0; s < 2; ++s) {
    ps.push(local_gradient(Model::LinearRegression, ps.current(), {{{0.3, 1.0}, 0.0}}, s));
  }
  auto next = ps.aggregate_and_broadcast();
  EXPECT_EQ(next.version, 1u);
  EXPECT_EQ(next.values, (std::vector<double>{0.0, 0.0}));
}

TEST(Train, BitIdenticalAcrossShardsAndWorkersAndOracle) {
  auto data = synth_logistic(301, 4, 9);
  TrainConfig cfg;
  cfg.model = Model::LogisticRegression;
  cfg.learning_rate = 0.7;
  cfg.iterations = 12;
  const auto oracle = single_node_oracle(cfg, data);
  for (int w : {1, 2, 4}) {
    auto c = make_cluster(w);
    for (int s : {1, 2, 4}) {
      cfg.shards = s;
      auto res = train(*c, cfg, shard_dataset(*c, data, s), 4);
      EXPECT_EQ(res.params, oracle.params) << "workers " << w << " shards " << s;
      EXPECT_EQ(res.loss, oracle.loss);
    }
  }
}

TEST(Train, LinearConvergesToClosedForm) {
  auto data = synth_linear(500, 2.0, 1.0, 0.05, 21);
  // closed-form least squares for [x, 1]
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
  EXPECT_NEAR(slope, 2.0, 0.05);
  EXPECT_NEAR(icpt, 1.0, 0.05);

  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.iterations = 80;
  cfg.shards = 3;
  auto c = make_cluster(2);
  auto res = train(*c, cfg, shard_dataset(*c, data, 3), 2);
  EXPECT_NEAR(res.params.values[0], slope, 1e-3);
  EXPECT_NEAR(res.params.values[1], icpt, 1e-3);
  EXPECT_EQ(res.params.version, 80u);
  for (std::size_t k = 1; k < res.loss.size(); ++k) EXPECT_LE(res.loss[k], res.loss[k - 1] + 1e-12);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto data = synth_linear(20, 2.0, 1.0, 0, 2);
  TrainConfig cfg;
  cfg.learning_rate = 0;
  cfg.iterations = 3;
  auto r = single_node_oracle(cfg, data);
  EXPECT_EQ(r.params.values, (std::vector<double>{0.0, 0.0}));
  auto c = make_cluster(1);
  EXPECT_EQ(train(*c, cfg, shard_dataset(*c, data, 1), 2).params.values, (std::vector<double>{0.0, 0.0}));
}

TEST(Train, LossNonIncreasingForSmallStep) {
  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.learning_rate = 0.1;
  for (Model m : {Model::LinearRegression, Model::LogisticRegression}) {
    cfg.model = m;
    auto data = m == Model::LinearRegression ? synth_linear(200, -1.5, 0.5, 0.1, 4) : synth_logistic(200, 3, 4);
    const auto r = single_node_oracle(cfg, data);
    for (std::size_t k = 1; k < r.loss.size(); ++k) EXPECT_LE(r.loss[k], r.loss[k - 1] + 1e-12) << k;
  }
}

TEST(Train, PipelinedPersistsLessThanStaged) {
  auto data = synth_linear(400, 2.0, 1.0, 0.02, 8);
  std::vector<std::string> lines;
  for (const auto& s : data) lines.push_back(sample_to_csv(s));
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.shards = 4;
  cfg.learning_rate = 0.5;
  auto c = make_cluster(2);
  auto raw = shard_csv_dataset(*c, lines, 4);
  TrainOptions piped{true, true, {}};
  TrainOptions staged{false, true, {}};
  auto a = train(*c, cfg, raw, 2, piped);
  auto b = train(*c, cfg, raw, 2, staged);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.params, single_node_oracle(cfg, data).params);
  EXPECT_EQ(a.metrics.bytes_persisted, 0u);
  EXPECT_GT(b.preprocess_bytes_persisted, 0u);
  EXPECT_LT(a.metrics.bytes_persisted, b.metrics.bytes_persisted);
}

TEST(Train, KilledGradientTaskChangesNothing) {
  TempDir d;
  auto data = synth_logistic(120, 3, 12);
  TrainConfig cfg;
  cfg.model = Model::LogisticRegression;
  cfg.iterations = 6;
  cfg.shards = 3;
  auto c = make_cluster(3);
  auto ds = shard_dataset(*c, data, 3);
  const auto clean = train(*c, cfg, ds, 3);
  const auto marker = (d / "kill").string();
  std::ofstream(marker) << "x";
  TrainOptions opt;
  opt.fault = {{2, marker}};
  const auto faulted = train(*c, cfg, ds, 3, opt);
  EXPECT_FALSE(std::filesystem::exists(marker));
  EXPECT_EQ(c->live_workers(), 2);
  EXPECT_EQ(faulted.params, clean.params);
  EXPECT_EQ(faulted.metrics.retries, 1);
}

TEST(Csv, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  for (const auto& s : synth_logistic(50, 5, 3)) {
    const auto back = sample_from_csv(sample_to_csv(s));
    EXPECT_EQ(back.x, s.x);
    EXPECT_EQ(back.y, s.y);
  }
  EXPECT_THROW(sample_from_csv("1,x"), Error);
}

int main(int argc, char** argv) {
  register_trainer_ops();
  if (auto rc = engine::run_worker_if_requested(argc, argv)) return *rc;
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
