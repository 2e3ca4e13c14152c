#pragma once

// On-disk experiment configuration and the partition/analyze/run drivers.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedtad/dataset.hpp"
#include "fedtad/partition.hpp"
#include "fedtad/runtime.hpp"

namespace fedtad::cli {

struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset;  // dataset directory
  std::optional<SbmSpec> sbm;                    // or a generated graph
  bool normalize_features = true;
  std::size_t num_clients = 5;
  std::optional<std::uint64_t> partition_seed;  // defaults to fed.seed
  std::optional<std::filesystem::path> partition_file;
  SplitRatios split;
  FedConfig fed;
  std::filesystem::path out = "out";
  bool distill_trace = false;

  std::uint64_t resolved_partition_seed() const { return partition_seed.value_or(fed.seed); }
  void validate() const;
};

/// Strict: unknown keys and wrong types raise ConfigError naming the key.
/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Every field, defaults included.
nlohmann::json to_json(const ExperimentConfig& cfg);

DatasetBundle load_experiment_graph(const ExperimentConfig& cfg);

/// Louvain + greedy packing, or the partition file when one is configured.
Partition make_partition(const Graph& g, std::size_t num_clients, std::uint64_t seed);

/// Per-client label histogram, class homophily (null when undefined) and reliability.
nlohmann::json analyze_shards(const std::vector<ClientShard>& shards, std::size_t walk_length);

/// Partition summary: sizes and split counts per shard.
nlohmann::json summarize_shards(const std::vector<ClientShard>& shards);

struct RunOutcome {
  FederationResult result;
  nlohmann::json summary;
};

/// Partition, federate and write metrics.csv, checkpoint.json, summary.json,
/// reliability.json, partition.json (and distill_trace.csv when enabled) into cfg.out.
RunOutcome run_experiment(const ExperimentConfig& cfg);

}  // namespace fedtad::cli
