#pragma once

// Client simulation: Louvain communities packed into K balanced clients,
// induced client subgraphs with stratified train/val/test splits, and the two
// heterogeneity-decoupling perturbations (strip all edges / add random edges).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fedtad/graph.hpp"
#include "fedtad/reliability_vector.hpp"

namespace fedtad {

struct LouvainResult {
  /// Community id per node, renumbered 0.. in order of first appearance.
  std::vector<std::uint32_t> communities;
  std::size_t num_communities = 0;
  /// Modularity of the singleton start followed by the partition after each level.
  std::vector<double> level_modularity;
};

/// Classic modularity (resolution 1) of a labeling.
double modularity(const Adjacency& adjacency, std::span<const std::uint32_t> communities);

/// Local moving + coarsening until a level gains less than 1e-7. Node visit
/// order is shuffled from `seed`. Throws PartitionError on an edgeless graph.
LouvainResult louvain(const Graph& g, std::uint64_t seed);

struct Partition {
  std::size_t num_clients = 0;
  std::vector<std::uint32_t> assignments;

  std::vector<std::size_t> client_sizes() const;
  /// Every node assigned once to a client in [0, K), every client nonempty.
  void validate() const;
  friend bool operator==(const Partition&, const Partition&) = default;
};

/// Greedy largest-first packing of communities into the currently smallest
/// client (ties: lower client id; equal-size communities ordered by a seeded
/// shuffle). With fewer than K communities the largest is halved along BFS
/// order until there are K.
Partition assign_communities(std::span<const std::uint32_t> communities, const Adjacency& adjacency,
                             std::size_t num_clients, std::uint64_t seed);

void write_partition(const Partition& p, const std::filesystem::path& path);
Partition read_partition(const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.2;
  double val = 0.4;
  double test = 0.4;
};

/// Floor each share of n, then hand leftovers to the largest fractional parts (ties: earlier part).
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

struct ClientShard {
  std::size_t client_id = 0;
  Graph graph;
  std::vector<std::uint32_t> global_ids;
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> val;
  std::vector<std::uint32_t> test;
  std::optional<ReliabilityVector> reliability;
};

/// One shard per client: induced subgraph (cross-client edges dropped) with a
/// per-client, class-stratified split of its labeled nodes.
std::vector<ClientShard> induce_shards(const Graph& g, const Partition& p, const SplitRatios& ratios,
                                       std::uint64_t seed);

/// Removes every edge; nodes, features, labels and splits are untouched.
std::vector<ClientShard> simulate_node_variation(std::vector<ClientShard> shards);

/// K copies of `base`, each with `edges_to_add` new uniformly drawn edges absent
/// from the base graph. With keep_first_unperturbed the first copy stays as is.
std::vector<ClientShard> simulate_topology_variation(const ClientShard& base, std::size_t num_clients,
                                                     std::size_t edges_to_add, std::uint64_t seed,
                                                     bool keep_first_unperturbed = false);

}  // namespace fedtad
