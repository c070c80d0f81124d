#include "adcloud/trainer/trainer.hpp"

#include <unistd.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "adcloud/binstream/stream.hpp"
#include "adcloud/error.hpp"

namespace adcloud::trainer {

using binstream::FieldTag;
using binstream::FieldValue;
using engine::OpKind;

std::string to_string(Model m) {
  return m == Model::LinearRegression ? "LINEAR_REGRESSION" : "LOGISTIC_REGRESSION";
}

Model parse_model(const std::string& s) {
  if (s == "LINEAR_REGRESSION") return Model::LinearRegression;
  if (s == "LOGISTIC_REGRESSION") return Model::LogisticRegression;
  throw Error(Errc::ConfigError, "model: unknown model '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw Error(Errc::InvalidArgument, "learning_rate must be finite and >= 0");
  }
  if (iterations < 1) throw Error(Errc::InvalidArgument, "iterations must be >= 1");
  if (shards < 1) throw Error(Errc::InvalidArgument, "shards must be >= 1");
  if (checkpoint_every < 0) throw Error(Errc::InvalidArgument, "checkpoint_every must be >= 0");
}

Bytes pack_doubles(const std::vector<double>& v) {
  Bytes out;
  out.reserve(v.size() * 8);
  for (double d : v) binstream::put_f64(out, d);
  return out;
}

std::vector<double> unpack_doubles(const Bytes& b) {
  if (b.size() % 8) throw Error(Errc::ParseError, "packed Float64 array has a ragged length");
  std::vector<double> v(b.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = binstream::get_f64(b.data() + 8 * i);
  return v;
}

BinaryRecord encode_sample(const Sample& s) {
  return BinaryRecord{FieldValue::bytes(pack_doubles(s.x)), FieldValue::float64(s.y)};
}

Sample decode_sample(const BinaryRecord& r) {
  if (r.size() != 2 || r[0].tag() != FieldTag::Bytes || r[1].tag() != FieldTag::Float64) {
    throw Error(Errc::ParseError, "sample must be [Bytes features, Float64 label]");
  }
  return Sample{unpack_doubles(r[0].as_bytes()), r[1].as_float64()};
}

namespace {

double dot(const std::vector<double>& w, const std::vector<double>& x) {
  if (w.size() != x.size()) {
    throw Error(Errc::DimensionMismatch,
                "sample has " + std::to_string(x.size()) + " features, model has " + std::to_string(w.size()));
  }
  double z = 0;
  for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
  return z;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Bytes pack_partials(const ExactSum& s) { return pack_doubles(s.partials()); }
ExactSum unpack_partials(const FieldValue& f) { return ExactSum::from_partials(unpack_doubles(f.as_bytes())); }

}  // namespace

double sample_loss(Model m, const std::vector<double>& w, const Sample& s) {
  const double z = dot(w, s.x);
  if (m == Model::LinearRegression) {
    const double r = z - s.y;
    return 0.5 * r * r;
  }
  return softplus(z) - s.y * z;
}

void sample_gradient(Model m, const std::vector<double>& w, const Sample& s, std::vector<double>& out) {
  const double z = dot(w, s.x);
  const double scale = m == Model::LinearRegression ? z - s.y : sigmoid(z) - s.y;
  out.resize(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) out[j] = scale * s.x[j];
}

BinaryRecord GradientUpdate::to_record() const {
  BinaryRecord r{FieldValue::int64(static_cast<std::int64_t>(shard)),
                 FieldValue::int64(static_cast<std::int64_t>(iteration)),
                 FieldValue::int64(static_cast<std::int64_t>(count)), FieldValue::bytes(pack_doubles(gradient)),
                 FieldValue::bytes(pack_partials(loss_sum))};
  for (const auto& s : gradient_sum) r.fields.push_back(FieldValue::bytes(pack_partials(s)));
  return r;
}

GradientUpdate GradientUpdate::from_record(const BinaryRecord& r) {
  if (r.size() < 5) throw Error(Errc::ParseError, "gradient update record is too short");
  GradientUpdate u;
  u.shard = static_cast<std::size_t>(r[0].as_int64());
  u.iteration = static_cast<std::uint64_t>(r[1].as_int64());
  u.count = static_cast<std::uint64_t>(r[2].as_int64());
  u.gradient = unpack_doubles(r[3].as_bytes());
  u.loss_sum = unpack_partials(r[4]);
  for (std::size_t i = 5; i < r.size(); ++i) u.gradient_sum.push_back(unpack_partials(r[i]));
  if (u.gradient_sum.size() != u.gradient.size()) throw Error(Errc::DimensionMismatch, "gradient update is ragged");
  return u;
}

std::vector<std::vector<Sample>> shard_data(const std::vector<Sample>& data, int shards) {
  if (data.empty()) throw Error(Errc::EmptyInput, "no training samples");
  if (shards < 1) throw Error(Errc::InvalidArgument, "shards must be >= 1");
  if (static_cast<std::size_t>(shards) > data.size()) {
    throw Error(Errc::InvalidArgument, "more shards than samples");
  }
  const std::size_t s = static_cast<std::size_t>(shards);
  const std::size_t base = data.size() / s, extra = data.size() % s;
  std::vector<std::vector<Sample>> out;
  std::size_t at = 0;
  for (std::size_t i = 0; i < s; ++i) {
    const std::size_t n = base + (i < extra ? 1 : 0);
    out.emplace_back(data.begin() + static_cast<std::ptrdiff_t>(at), data.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
  }
  return out;
}

GradientUpdate local_gradient(Model m, const ParameterSet& params, const std::vector<Sample>& shard,
                              std::size_t shard_id) {
  if (shard.empty()) throw Error(Errc::EmptyInput, "empty shard " + std::to_string(shard_id));
  const std::size_t d = params.values.size();
  GradientUpdate u;
  u.shard = shard_id;
  u.iteration = params.version;
  u.count = shard.size();
  u.gradient_sum.resize(d);
  std::vector<double> g;
  for (const auto& s : shard) {
    sample_gradient(m, params.values, s, g);
    for (std::size_t j = 0; j < d; ++j) u.gradient_sum[j].add(g[j]);
    u.loss_sum.add(sample_loss(m, params.values, s));
  }
  u.gradient.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    u.gradient[j] = u.gradient_sum[j].value() / static_cast<double>(u.count);
    if (!std::isfinite(u.gradient[j])) throw Error(Errc::NonFiniteGradient, "gradient component " + std::to_string(j));
  }
  return u;
}

GradientUpdate tree_merge(const std::vector<GradientUpdate>& updates) {
  if (updates.empty()) throw Error(Errc::MissingUpdate, "no updates to merge");
  std::function<GradientUpdate(std::size_t, std::size_t)> merge = [&](std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return updates[lo];
    const std::size_t mid = lo + (hi - lo) / 2;
    auto a = merge(lo, mid);
    const auto b = merge(mid, hi);
    if (a.gradient_sum.size() != b.gradient_sum.size()) throw Error(Errc::DimensionMismatch, "updates disagree on D");
    for (std::size_t j = 0; j < a.gradient_sum.size(); ++j) a.gradient_sum[j].merge(b.gradient_sum[j]);
    a.loss_sum.merge(b.loss_sum);
    a.count += b.count;
    return a;
  };
  auto total = merge(0, updates.size());
  for (std::size_t j = 0; j < total.gradient.size(); ++j) {
    total.gradient[j] = total.gradient_sum[j].value() / static_cast<double>(total.count);
  }
  return total;
}

ParameterSet apply_step(const ParameterSet& p, const GradientUpdate& total, double lr) {
  ParameterSet next{p.version + 1, p.values};
  for (std::size_t j = 0; j < next.values.size(); ++j) {
    next.values[j] = p.values[j] - lr * (total.gradient_sum[j].value() / static_cast<double>(total.count));
    if (!std::isfinite(next.values[j])) throw Error(Errc::NonFiniteGradient, "parameter diverged");
  }
  return next;
}

// ---- parameter server ----

namespace {
std::string update_key(std::uint64_t it, std::size_t shard) {
  return "ps/update/" + std::to_string(it) + "/" + std::to_string(shard);
}
std::string params_key(std::uint64_t v) { return "ps/params/" + std::to_string(v); }
std::string ckpt_key(std::uint64_t v) { return "ps/checkpoint/" + std::to_string(v); }

BinaryRecord params_record(const ParameterSet& p) {
  return BinaryRecord{FieldValue::int64(static_cast<std::int64_t>(p.version)), FieldValue::bytes(pack_doubles(p.values))};
}
ParameterSet params_from(const Bytes& b) {
  const auto r = binstream::decode_record(b).value;
  return ParameterSet{static_cast<std::uint64_t>(r[0].as_int64()), unpack_doubles(r[1].as_bytes())};
}
}  // namespace

ParameterServer::ParameterServer(storage::TierConfig tiers, ParameterSet initial, int shards, double learning_rate,
                                 int checkpoint_every)
    : store_(std::make_unique<storage::TieredStore>(std::move(tiers))),
      current_(std::move(initial)),
      shards_(shards),
      lr_(learning_rate),
      checkpoint_every_(checkpoint_every) {
  write_params(current_);
}

void ParameterServer::write_params(const ParameterSet& p) {
  store_->put(params_key(p.version), binstream::encode_record(params_record(p)), false);
}

void ParameterServer::push(const GradientUpdate& u) {
  if (u.iteration != current_.version) {
    throw Error(Errc::StaleIteration, "update for iteration " + std::to_string(u.iteration) + ", server is at " +
                                          std::to_string(current_.version));
  }
  if (u.gradient.size() != current_.values.size()) throw Error(Errc::DimensionMismatch, "update has wrong length");
  if (u.shard >= static_cast<std::size_t>(shards_)) throw Error(Errc::InvalidArgument, "unknown shard");
  store_->put(update_key(u.iteration, u.shard), binstream::encode_record(u.to_record()), false);
}

GradientUpdate ParameterServer::read_update(std::uint64_t iteration, std::size_t shard) {
  auto bytes = store_->try_get(update_key(iteration, shard));
  if (!bytes) {
    throw Error(Errc::MissingUpdate, "iteration " + std::to_string(iteration) + " shard " + std::to_string(shard));
  }
  return GradientUpdate::from_record(binstream::decode_record(*bytes).value);
}

ParameterSet ParameterServer::read_params(std::uint64_t version) {
  auto bytes = store_->try_get(params_key(version));
  if (!bytes) throw Error(Errc::NotFound, params_key(version));
  return params_from(*bytes);
}

std::optional<ParameterSet> ParameterServer::read_checkpoint(std::uint64_t version) {
  auto bytes = store_->try_get(ckpt_key(version));
  if (!bytes) return std::nullopt;
  return params_from(*bytes);
}

ParameterSet ParameterServer::aggregate_and_broadcast() {
  std::vector<GradientUpdate> updates;
  for (int s = 0; s < shards_; ++s) updates.push_back(read_update(current_.version, static_cast<std::size_t>(s)));
  const auto total = tree_merge(updates);
  last_loss_ = total.loss_sum.value() / static_cast<double>(total.count);
  current_ = apply_step(current_, total, lr_);
  write_params(current_);
  if (checkpoint_every_ > 0 && current_.version % static_cast<std::uint64_t>(checkpoint_every_) == 0) {
    store_->put(ckpt_key(current_.version), binstream::encode_record(params_record(current_)), true);
    store_->flush_barrier();
  }
  return current_;
}

// ---- engine ops ----

namespace {

// config: [Int64 model, Int64 version, Bytes params, (Utf8 fault marker)]
std::vector<BinaryRecord> gradient_op(engine::TaskContext& ctx, std::vector<BinaryRecord> in) {
  const auto& cfg = ctx.config();
  if (cfg.size() > 3 && ctx.partition() == 0) {
    const auto marker = cfg[3].as_utf8();
    if (std::rename(marker.c_str(), (marker + ".claimed").c_str()) == 0) ::_exit(137);
  }
  const auto model = static_cast<Model>(cfg[0].as_int64());
  ParameterSet p{static_cast<std::uint64_t>(cfg[1].as_int64()), unpack_doubles(cfg[2].as_bytes())};
  std::vector<Sample> shard;
  shard.reserve(in.size());
  for (const auto& r : in) shard.push_back(decode_sample(r));
  return {local_gradient(model, p, shard, ctx.partition()).to_record()};
}

std::vector<BinaryRecord> preprocess_op(engine::TaskContext&, std::vector<BinaryRecord> in) {
  std::vector<BinaryRecord> out;
  out.reserve(in.size());
  for (const auto& r : in) out.push_back(encode_sample(sample_from_csv(r[0].as_utf8())));
  return out;
}

}  // namespace

void register_trainer_ops(engine::OpRegistry& registry) {
  registry.register_op("trainer.gradient", OpKind::MapPartitions, gradient_op);
  registry.register_op("trainer.preprocess", OpKind::MapPartitions, preprocess_op);
}

engine::DatasetRef shard_dataset(engine::Cluster& cluster, const std::vector<Sample>& data, int shards) {
  std::vector<std::vector<BinaryRecord>> parts;
  for (const auto& shard : shard_data(data, shards)) {
    auto& p = parts.emplace_back();
    for (const auto& s : shard) p.push_back(encode_sample(s));
  }
  return cluster.create_dataset(parts);
}

engine::DatasetRef shard_csv_dataset(engine::Cluster& cluster, const std::vector<std::string>& lines, int shards) {
  if (lines.empty()) throw Error(Errc::EmptyInput, "no training samples");
  if (shards < 1 || static_cast<std::size_t>(shards) > lines.size()) throw Error(Errc::InvalidArgument, "bad shard count");
  std::vector<std::vector<BinaryRecord>> parts(static_cast<std::size_t>(shards));
  const std::size_t base = lines.size() / parts.size(), extra = lines.size() % parts.size();
  std::size_t at = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t k = 0; k < base + (i < extra ? 1 : 0); ++k) {
      parts[i].push_back(BinaryRecord{FieldValue::utf8(lines[at++])});
    }
  }
  return cluster.create_dataset(parts);
}

TrainResult train(engine::Cluster& cluster, const TrainConfig& config, const engine::DatasetRef& data,
                  std::size_t dims, const TrainOptions& options) {
  config.validate();
  if (data.num_partitions != static_cast<std::size_t>(config.shards)) {
    throw Error(Errc::InvalidArgument, "dataset has " + std::to_string(data.num_partitions) + " partitions for " +
                                           std::to_string(config.shards) + " shards");
  }
  TrainResult result;
  engine::DatasetRef input = data;
  if (options.raw_csv) {
    engine::StagePlan pre;
    pre.source = data;
    pre.ops = {{"trainer.preprocess", OpKind::MapPartitions, {}}};
    pre.persist_output = !options.pipelined;
    auto res = cluster.submit(pre);
    result.preprocess_bytes_persisted = res.metrics.bytes_persisted;
    result.metrics += res.metrics;
    input = res.dataset;
  }

  std::random_device rd;
  const auto ps_dir = cluster.config().state_dir / "ps" / std::to_string(rd());
  struct Cleanup {
    std::filesystem::path dir;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
    }
  } cleanup{ps_dir};
  ParameterServer ps(storage::TierConfig::standard(ps_dir, cluster.backing_dir(), 64ull << 20, 256ull << 20, 1ull << 30),
                     ParameterSet{0, std::vector<double>(dims, 0.0)}, config.shards, config.learning_rate,
                     config.checkpoint_every);

  for (int k = 0; k < config.iterations; ++k) {
    const auto& p = ps.current();
    BinaryRecord cfg{FieldValue::int64(static_cast<std::int64_t>(config.model)),
                     FieldValue::int64(static_cast<std::int64_t>(p.version)), FieldValue::bytes(pack_doubles(p.values))};
    if (options.fault && options.fault->first == p.version) cfg.fields.push_back(FieldValue::utf8(options.fault->second));
    engine::StagePlan plan;
    plan.source = input;
    plan.ops = {{"trainer.gradient", OpKind::MapPartitions, cfg}};
    plan.persist_output = false;
    auto res = cluster.submit(plan);
    for (const auto& part : cluster.collect_partitions(res.dataset)) {
      for (const auto& r : part) ps.push(GradientUpdate::from_record(r));
    }
    ps.aggregate_and_broadcast();
    result.loss.push_back(ps.last_loss());
    result.metrics += res.metrics;
  }
  result.params = ps.current();
  return result;
}

TrainResult single_node_oracle(const TrainConfig& config, const std::vector<Sample>& data) {
  config.validate();
  if (data.empty()) throw Error(Errc::EmptyInput, "no training samples");
  TrainResult r;
  r.params = ParameterSet{0, std::vector<double>(data.front().x.size(), 0.0)};
  std::vector<double> g;
  for (int k = 0; k < config.iterations; ++k) {
    std::vector<ExactSum> sums(r.params.values.size());
    ExactSum loss;
    for (const auto& s : data) {
      sample_gradient(config.model, r.params.values, s, g);
      for (std::size_t j = 0; j < g.size(); ++j) sums[j].add(g[j]);
      loss.add(sample_loss(config.model, r.params.values, s));
    }
    const auto n = static_cast<double>(data.size());
    r.loss.push_back(loss.value() / n);
    for (std::size_t j = 0; j < sums.size(); ++j) {
      r.params.values[j] = r.params.values[j] - config.learning_rate * (sums[j].value() / n);
    }
    r.params.version += 1;
  }
  return r;
}

std::vector<Sample> synth_linear(std::size_t n, double slope, double intercept, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> eps(0.0, 1.0);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng);
    const double e = noise > 0 ? noise * eps(rng) : 0.0;
    out.push_back(Sample{{x, 1.0}, slope * x + intercept + e});
  }
  return out;
}

std::vector<Sample> synth_logistic(std::size_t n, std::size_t features, std::uint64_t seed) {
  if (features < 1) throw Error(Errc::InvalidArgument, "need at least the bias feature");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> truth(features);
  for (auto& t : truth) t = 2.0 * u(rng);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    for (std::size_t j = 0; j + 1 < features; ++j) s.x.push_back(u(rng));
    s.x.push_back(1.0);
    const double p = sigmoid(dot(truth, s.x));
    s.y = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p ? 1.0 : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

std::string sample_to_csv(const Sample& s) {
  std::string out;
  char buf[32];
  auto append = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
  };
  for (double v : s.x) {
    append(v);
    out += ',';
  }
  append(s.y);
  return out;
}

Sample sample_from_csv(const std::string& line) {
  std::vector<double> v;
  const char* p = line.data();
  const char* end = p + line.size();
  while (p < end) {
    double d;
    auto res = std::from_chars(p, end, d);
    if (res.ec != std::errc()) throw Error(Errc::ParseError, "bad number in '" + line + "'");
    v.push_back(d);
    p = res.ptr;
    if (p < end) {
      if (*p != ',') throw Error(Errc::ParseError, "expected ',' in '" + line + "'");
      ++p;
    }
  }
  if (v.size() < 2) throw Error(Errc::ParseError, "need at least one feature and a label");
  const double y = v.back();
  v.pop_back();
  return Sample{std::move(v), y};
}

nlohmann::json to_json(const ParameterSet& p) { return {{"version", p.version}, {"values", p.values}}; }

}  // namespace adcloud::trainer
