#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adcloud/engine/cluster.hpp"
#include "adcloud/storage/tiered_store.hpp"
#include "adcloud/trainer/exact_sum.hpp"

namespace adcloud::trainer {

using binstream::BinaryRecord;
using binstream::Bytes;

enum class Model { LinearRegression, LogisticRegression };

std::string to_string(Model m);
Model parse_model(const std::string& s);  // ConfigError

struct TrainConfig {
  Model model = Model::LinearRegression;
  double learning_rate = 0.1;
  int iterations = 100;
  int shards = 1;
  std::uint64_t seed = 0;
  /// Persist a parameter checkpoint every this many iterations (0 = never).
  int checkpoint_every = 0;

  void validate() const;  // InvalidArgument
};

/// Features already include any bias column; there is no implicit intercept.
struct Sample {
  std::vector<double> x;
  double y = 0;
};

/// [Bytes features (F x Float64-LE), Float64 label]
BinaryRecord encode_sample(const Sample& s);
Sample decode_sample(const BinaryRecord& r);  // ParseError
Bytes pack_doubles(const std::vector<double>& v);
std::vector<double> unpack_doubles(const Bytes& b);

struct ParameterSet {
  std::uint64_t version = 0;
  std::vector<double> values;

  bool operator==(const ParameterSet&) const = default;
};

struct GradientUpdate {
  std::size_t shard = 0;
  std::uint64_t iteration = 0;
  /// Mean per-sample gradient of the shard, rounded once.
  std::vector<double> gradient;
  std::uint64_t count = 0;
  /// Exact per-dimension sums of the per-sample gradients and of the
  /// per-sample losses; aggregation uses these so the step does not depend on
  /// how samples were sharded.
  std::vector<ExactSum> gradient_sum;
  ExactSum loss_sum;

  BinaryRecord to_record() const;
  static GradientUpdate from_record(const BinaryRecord& r);
};

double sample_loss(Model m, const std::vector<double>& w, const Sample& s);
/// Per-sample gradient written into `out` (size D).
void sample_gradient(Model m, const std::vector<double>& w, const Sample& s, std::vector<double>& out);

/// Contiguous split with sizes differing by at most one (larger shards
/// first). Throws EmptyInput.
std::vector<std::vector<Sample>> shard_data(const std::vector<Sample>& data, int shards);

/// Throws DimensionMismatch, NonFiniteGradient, EmptyInput (empty shard).
GradientUpdate local_gradient(Model m, const ParameterSet& params, const std::vector<Sample>& shard,
                              std::size_t shard_id);

/// Parameter server on a tiered store: gradient updates live under
/// ps/update/<iteration>/<shard>, versions under ps/params/<version>. All
/// blocks are cache-only; checkpoints are persisted copies.
class ParameterServer {
 public:
  ParameterServer(storage::TierConfig tiers, ParameterSet initial, int shards, double learning_rate,
                  int checkpoint_every = 0);

  std::uint64_t iteration() const noexcept { return current_.version; }
  const ParameterSet& current() const noexcept { return current_; }

  /// Throws StaleIteration, DimensionMismatch.
  void push(const GradientUpdate& u);
  /// Barrier step. Throws MissingUpdate if a shard has not pushed.
  ParameterSet aggregate_and_broadcast();
  /// Mean loss of the last aggregated iteration.
  double last_loss() const noexcept { return last_loss_; }

  ParameterSet read_params(std::uint64_t version);
  GradientUpdate read_update(std::uint64_t iteration, std::size_t shard);
  std::optional<ParameterSet> read_checkpoint(std::uint64_t version);
  storage::TieredStore& store() noexcept { return *store_; }

 private:
  void write_params(const ParameterSet& p);
  std::unique_ptr<storage::TieredStore> store_;
  ParameterSet current_;
  int shards_;
  double lr_;
  int checkpoint_every_;
  double last_loss_ = 0;
};

/// Sum of shard updates in ascending shard order over a fixed binary tree.
GradientUpdate tree_merge(const std::vector<GradientUpdate>& updates);

/// new = old - lr * (sum of per-sample gradients / total count)
ParameterSet apply_step(const ParameterSet& p, const GradientUpdate& total, double lr);

struct TrainResult {
  ParameterSet params;
  std::vector<double> loss;  // mean loss at the parameters each iteration started from
  engine::JobMetrics metrics;
  std::uint64_t preprocess_bytes_persisted = 0;
};

struct TrainOptions {
  /// One preprocess job kept in the cache tiers (pipelined) or persisted to
  /// the backing store before training (staged).
  bool pipelined = true;
  /// Raw input is CSV text records ([Utf8 "x1,...,xF,y"]) to be preprocessed.
  bool raw_csv = false;
  /// Test hook: the gradient task for shard 0 at this iteration kills its
  /// worker once if the marker file can be claimed.
  std::optional<std::pair<std::uint64_t, std::string>> fault;
};

/// Synchronous distributed training on the cluster. `data` holds one
/// partition per shard (see shard_dataset).
TrainResult train(engine::Cluster& cluster, const TrainConfig& config, const engine::DatasetRef& data,
                  std::size_t dims, const TrainOptions& options = {});

/// Shards samples and persists them as a dataset with one partition per shard.
engine::DatasetRef shard_dataset(engine::Cluster& cluster, const std::vector<Sample>& data, int shards);
engine::DatasetRef shard_csv_dataset(engine::Cluster& cluster, const std::vector<std::string>& lines, int shards);

/// Sequential reference implementation over the whole dataset.
TrainResult single_node_oracle(const TrainConfig& config, const std::vector<Sample>& data);

/// y = slope * x + intercept (+ noise), x uniform in [-1, 1]; features [x, 1].
std::vector<Sample> synth_linear(std::size_t n, double slope, double intercept, double noise, std::uint64_t seed);
/// Labels in {0,1} drawn from a logistic model over [x1, ..., x_{F-1}, 1].
std::vector<Sample> synth_logistic(std::size_t n, std::size_t features, std::uint64_t seed);

std::string sample_to_csv(const Sample& s);
Sample sample_from_csv(const std::string& line);  // ParseError

void register_trainer_ops(engine::OpRegistry& registry = engine::OpRegistry::global());

nlohmann::json to_json(const ParameterSet& p);

}  // namespace adcloud::trainer
