#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

#include "adcloud/engine/cluster.hpp"
#include "adcloud/mapgen/pipeline.hpp"
#include "adcloud/trainer/trainer.hpp"

namespace adcloud::cli {

// Every parser fills defaults, rejects unknown keys and throws ConfigError
// whose message starts with the offending field path (e.g. "tiers.mem").
// dump_* emits the canonical form: every field present, keys sorted.
// Paths are kept exactly as written; callers resolve them.

/// Reads a JSON file. Throws ConfigError (missing file, invalid JSON).
nlohmann::json load_json(const std::filesystem::path& path);

engine::ClusterConfig parse_cluster_config(const nlohmann::json& j);
nlohmann::json dump_cluster_config(const engine::ClusterConfig& c);

struct TrainJobConfig {
  trainer::TrainConfig train;
  bool pipelined = true;
};
TrainJobConfig parse_train_config(const nlohmann::json& j);
nlohmann::json dump_train_config(const TrainJobConfig& c);

mapgen::MapConfig parse_map_config(const nlohmann::json& j);
nlohmann::json dump_map_config(const mapgen::MapConfig& c);
/// Makes relative log/label paths relative to `base`.
void resolve_paths(mapgen::MapConfig& c, const std::filesystem::path& base);

struct PlanFile {
  std::string glob;
  engine::Partitioner partitioner;
  std::vector<engine::OpSpec> ops;
  engine::SlotKind backend = engine::SlotKind::Cpu;
  bool persist_output = true;
  std::optional<std::string> output;  // partition-stream file for the collected result
};
PlanFile parse_plan(const nlohmann::json& j);
nlohmann::json dump_plan(const PlanFile& p);

/// Dispatches on kind: "cluster", "train", "map", "plan".
nlohmann::json canonicalize(const std::string& kind, const nlohmann::json& j);

}  // namespace adcloud::cli
