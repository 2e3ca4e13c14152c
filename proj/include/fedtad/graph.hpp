#pragma once

// Undirected attributed graphs and the operators derived from them: symmetric
// GCN normalization over A+I, the random-walk transition matrix A D^-1 over the
// raw adjacency, and return-probability profiles diag(T^1..T^p).

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedtad/linalg.hpp"

namespace fedtad {

inline constexpr int kUnlabeled = -1;

struct Edge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Symmetric neighbor lists in CSR form: sorted, deduplicated, no self-loops.
class Adjacency {
 public:
  Adjacency() = default;
  /// Empty adjacency over `num_nodes` isolated nodes.
  explicit Adjacency(std::size_t num_nodes);
  /// Symmetrizes, drops self-loops and duplicates. Throws GraphError on an out-of-range endpoint.
  static Adjacency from_edges(std::size_t num_nodes, std::span<const Edge> edges);

  std::size_t num_nodes() const noexcept { return offsets_.size() - 1; }
  /// Undirected edge count.
  std::size_t num_edges() const noexcept { return neighbors_.size() / 2; }
  std::size_t degree(std::size_t u) const { return offsets_[u + 1] - offsets_[u]; }
  std::span<const std::uint32_t> neighbors(std::size_t u) const {
    return {neighbors_.data() + offsets_[u], degree(u)};
  }
  bool has_edge(std::size_t u, std::size_t v) const;
  /// Each undirected edge once with u < v, lexicographically sorted.
  std::vector<Edge> edge_list() const;

  friend bool operator==(const Adjacency&, const Adjacency&) = default;

 private:
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> neighbors_;
};

class Graph {
 public:
  Graph() = default;

  std::size_t num_nodes() const noexcept { return labels_.size(); }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  const Matrix& features() const noexcept { return features_; }
  std::span<const int> labels() const noexcept { return labels_; }
  int label(std::size_t u) const { return labels_[u]; }
  const Adjacency& adjacency() const noexcept { return adjacency_; }
  std::size_t num_edges() const noexcept { return adjacency_.num_edges(); }
  std::size_t degree(std::size_t u) const { return adjacency_.degree(u); }
  std::span<const std::uint32_t> neighbors(std::size_t u) const { return adjacency_.neighbors(u); }
  std::vector<Edge> edge_list() const { return adjacency_.edge_list(); }

  /// Same nodes, features and labels over a different edge set.
  Graph with_adjacency(Adjacency adjacency) const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  friend Graph build_graph(std::span<const Edge>, Matrix, std::vector<int>, int);
  Matrix features_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  Adjacency adjacency_;
};

/// Validates and canonicalizes. Node count is labels.size(); features must have that many rows.
Graph build_graph(std::span<const Edge> edges, Matrix features, std::vector<int> labels, int num_classes);
/// Row-vector overload; ragged rows are a GraphError.
Graph build_graph(std::span<const Edge> edges, const std::vector<std::vector<double>>& feature_rows,
                  std::vector<int> labels, int num_classes);

/// Subgraph induced on `nodes` (local index i <-> nodes[i]); edges leaving the set are dropped.
Graph induced_subgraph(const Graph& g, std::span<const std::uint32_t> nodes);

/// D^-1/2 (A + I) D^-1/2 with D the degree of A + I.
struct NormalizedAdjacency {
  SparseMatrix matrix;
};

/// Column-stochastic A D^-1 over the raw adjacency; isolated nodes give an all-zero column.
struct TransitionMatrix {
  SparseMatrix matrix;
};

NormalizedAdjacency gcn_normalize(const Adjacency& adjacency);
NormalizedAdjacency gcn_normalize(const Graph& g);
TransitionMatrix transition_matrix(const Graph& g);

/// num_nodes x p matrix; column j-1 holds diag(T^j). Walks are pushed from one
/// source at a time along sparse frontiers, so T^j is never materialized.
Matrix diffusion_diagonals(const TransitionMatrix& t, std::size_t p);

}  // namespace fedtad
