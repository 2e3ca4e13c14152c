#pragma once

// Client-side statistics: class-wise edge homophily (analysis only) and the
// class-wise knowledge reliability each client uploads once before training.

#include <cstddef>
#include <cstdint>
#include <optional>

#include "fedtad/graph.hpp"
#include "fedtad/partition.hpp"
#include "fedtad/reliability_vector.hpp"

namespace fedtad {

/// Edges with both endpoints labeled c over edges with at least one endpoint
/// labeled c. nullopt when no edge touches class c.
std::optional<double> class_homophily(const Graph& g, int c);

/// Node features concatenated with their return-probability profile, width F + p.
Matrix hybrid_embeddings(const Graph& g, std::size_t walk_length);

/// phi_c = sum over training nodes i labeled c of max(0, mean_{j in N(i)} cos(h_i, h_j))
/// with h the hybrid embedding. Isolated nodes contribute 0.
ReliabilityVector knowledge_reliability(const ClientShard& shard, std::size_t walk_length);

/// phi'_c = max(0, phi_c * (1 + noise_level * eps_c)), eps_c ~ N(0, 1) drawn from `seed`.
ReliabilityVector perturb_reliability(const ReliabilityVector& phi, double noise_level, std::uint64_t seed);

}  // namespace fedtad
