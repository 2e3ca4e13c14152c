#pragma once

// Communication rounds: select clients, train locally, average, optionally
// refine on the server, evaluate.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedtad/fedtad_server.hpp"
#include "fedtad/models.hpp"
#include "fedtad/optim.hpp"
#include "fedtad/partition.hpp"

namespace fedtad {

struct FedConfig {
  std::size_t rounds = 100;
  std::size_t local_epochs = 3;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = 64;
  double dropout = 0.5;
  std::string optimizer = "adam";
  double learning_rate = 1e-2;
  double weight_decay = 5e-4;
  std::string aggregator = "fedavg";
  std::string post_processor = "none";  // "none" | "fedtad"
  DistillConfig distill;
  std::size_t walk_length = 5;
  double reliability_noise = 0.0;
  std::size_t workers = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  std::vector<std::size_t> selected;
  double global_test_acc = 0.0;
  std::vector<double> local_val_acc;  // aligned with `selected`; NaN when a client has no val nodes
  double mean_local_val_acc = 0.0;
  std::size_t test_nodes_evaluated = 0;
  double seconds = 0.0;
};

/// ceil(fraction * K) distinct ids in ascending order, uniform, fixed per (seed, round).
std::vector<std::size_t> select_clients(std::size_t num_clients, double fraction, std::size_t round,
                                        std::uint64_t seed);

/// Initial global model for a run; the seed derivation is shared with tests.
GcnModel initial_model(std::size_t in_dim, std::size_t num_classes, const FedConfig& cfg);

/// A client's persistent training state: its optimizer moments and dropout
/// counter live across rounds. Each call starts from the downloaded weights.
class LocalTrainer {
 public:
  LocalTrainer(const ClientShard& shard, const FedConfig& cfg);

  /// Copies `global` and trains `epochs` full-batch epochs on the train mask.
  /// Losses per epoch are appended to `losses` when given.
  ModelWeights update(const ModelWeights& global, std::size_t epochs, std::vector<double>* losses = nullptr);

  const NormalizedAdjacency& norm_adj() const noexcept { return norm_adj_; }
  std::size_t client_id() const noexcept { return shard_->client_id; }
  std::uint64_t steps() const noexcept { return steps_; }

  /// Dropout seed of the n-th optimization step of client `client_id`.
  static std::uint64_t dropout_seed(std::uint64_t run_seed, std::size_t client_id, std::uint64_t step);

 private:
  const ClientShard* shard_;
  NormalizedAdjacency norm_adj_;
  GcnModel model_;
  std::unique_ptr<Optimizer> optimizer_;
  std::uint64_t seed_;
  std::uint64_t steps_ = 0;
};

/// Stateless convenience: fresh optimizer, client-id dropout seeds.
ModelWeights local_update(const ClientShard& shard, const ModelWeights& global, std::size_t epochs,
                          const FedConfig& cfg);

/// sum_k (n_k / N) w_k, accumulated in list order. Throws ShapeError naming the tensor on mismatch.
ModelWeights fedavg_aggregate(std::span<const ModelWeights> weights, std::span<const std::size_t> node_counts);

/// Accuracy of `model` on the union of client test masks, each client on its own subgraph.
struct Evaluation {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};
Evaluation evaluate_global(const GcnModel& model, std::span<const ClientShard> shards,
                           std::span<const NormalizedAdjacency> norm_adjs);

struct FederationResult {
  std::vector<RoundRecord> rounds;
  ModelWeights final_weights;
  std::vector<ReliabilityVector> reliability;  // what each client uploaded
  std::vector<DistillTraceRow> distill_trace;
};

using RoundCallback = std::function<void(const RoundRecord&)>;

FederationResult run_federation(std::span<const ClientShard> shards, const FedConfig& cfg,
                                const RoundCallback& on_round = {});

/// round,global_test_acc,mean_local_val_acc,seconds
void write_metrics_csv(std::span<const RoundRecord> rounds, const std::filesystem::path& path);

}  // namespace fedtad
