#include "fedtad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedtad/errors.hpp"

namespace fedtad {

Adjacency::Adjacency(std::size_t num_nodes) : offsets_(num_nodes + 1, 0) {}

Adjacency Adjacency::from_edges(std::size_t num_nodes, std::span<const Edge> edges) {
  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (const Edge& e : edges) {
    if (e.u >= num_nodes || e.v >= num_nodes) {
      throw GraphError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") out of range for " +
                       std::to_string(num_nodes) + " nodes");
    }
    if (e.u == e.v) continue;
    directed.push_back({e.u, e.v});
    directed.push_back({e.v, e.u});
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  Adjacency a(num_nodes);
  a.neighbors_.reserve(directed.size());
  for (const Edge& e : directed) {
    ++a.offsets_[e.u + 1];
    a.neighbors_.push_back(e.v);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) a.offsets_[i + 1] += a.offsets_[i];
  return a;
}

bool Adjacency::has_edge(std::size_t u, std::size_t v) const {
  const auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), static_cast<std::uint32_t>(v));
}

std::vector<Edge> Adjacency::edge_list() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (std::size_t u = 0; u < num_nodes(); ++u)
    for (auto v : neighbors(u))
      if (u < v) out.push_back({static_cast<std::uint32_t>(u), v});
  return out;
}

Graph Graph::with_adjacency(Adjacency adjacency) const {
  if (adjacency.num_nodes() != num_nodes()) throw GraphError("with_adjacency: node count mismatch");
  Graph g = *this;
  g.adjacency_ = std::move(adjacency);
  return g;
}

Graph build_graph(std::span<const Edge> edges, Matrix features, std::vector<int> labels, int num_classes) {
  if (num_classes < 1) throw GraphError("num_classes must be >= 1");
  const std::size_t n = labels.size();
  if (features.rows() != n) {
    throw GraphError("feature matrix has " + std::to_string(features.rows()) + " rows for " + std::to_string(n) +
                     " nodes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != kUnlabeled && (labels[i] < 0 || labels[i] >= num_classes)) {
      throw GraphError("label " + std::to_string(labels[i]) + " of node " + std::to_string(i) + " outside [0," +
                       std::to_string(num_classes) + ")");
    }
  }
  Graph g;
  g.adjacency_ = Adjacency::from_edges(n, edges);
  g.features_ = std::move(features);
  g.labels_ = std::move(labels);
  g.num_classes_ = num_classes;
  return g;
}

Graph build_graph(std::span<const Edge> edges, const std::vector<std::vector<double>>& feature_rows,
                  std::vector<int> labels, int num_classes) {
  const std::size_t f = feature_rows.empty() ? 0 : feature_rows.front().size();
  std::vector<double> values;
  values.reserve(feature_rows.size() * f);
  for (std::size_t i = 0; i < feature_rows.size(); ++i) {
    if (feature_rows[i].size() != f) {
      throw GraphError("ragged features: row " + std::to_string(i) + " has " + std::to_string(feature_rows[i].size()) +
                       " values, expected " + std::to_string(f));
    }
    values.insert(values.end(), feature_rows[i].begin(), feature_rows[i].end());
  }
  return build_graph(edges, Matrix(feature_rows.size(), f, std::move(values)), std::move(labels), num_classes);
}

Graph induced_subgraph(const Graph& g, std::span<const std::uint32_t> nodes) {
  constexpr auto kAbsent = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> local(g.num_nodes(), kAbsent);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] >= g.num_nodes()) throw GraphError("induced_subgraph: node id out of range");
    if (local[nodes[i]] != kAbsent) throw GraphError("induced_subgraph: duplicate node id");
    local[nodes[i]] = static_cast<std::uint32_t>(i);
  }
  std::vector<Edge> edges;
  Matrix features(nodes.size(), g.feature_dim());
  std::vector<int> labels(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto src = g.features().row(nodes[i]);
    std::copy(src.begin(), src.end(), features.row(i).begin());
    labels[i] = g.label(nodes[i]);
    for (auto v : g.neighbors(nodes[i]))
      if (local[v] != kAbsent && i < local[v]) edges.push_back({static_cast<std::uint32_t>(i), local[v]});
  }
  return build_graph(edges, std::move(features), std::move(labels), g.num_classes());
}

NormalizedAdjacency gcn_normalize(const Adjacency& adjacency) {
  const std::size_t n = adjacency.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (std::size_t u = 0; u < n; ++u) inv_sqrt[u] = 1.0 / std::sqrt(static_cast<double>(adjacency.degree(u) + 1));

  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_offsets.assign(1, 0);
  m.col_indices.reserve(2 * adjacency.num_edges() + n);
  m.values.reserve(2 * adjacency.num_edges() + n);
  for (std::size_t u = 0; u < n; ++u) {
    bool self_done = false;
    for (auto v : adjacency.neighbors(u)) {
      if (!self_done && v > u) {
        m.col_indices.push_back(static_cast<std::uint32_t>(u));
        m.values.push_back(inv_sqrt[u] * inv_sqrt[u]);
        self_done = true;
      }
      m.col_indices.push_back(v);
      m.values.push_back(inv_sqrt[u] * inv_sqrt[v]);
    }
    if (!self_done) {
      m.col_indices.push_back(static_cast<std::uint32_t>(u));
      m.values.push_back(inv_sqrt[u] * inv_sqrt[u]);
    }
    m.row_offsets.push_back(m.col_indices.size());
  }
  return {std::move(m)};
}

NormalizedAdjacency gcn_normalize(const Graph& g) { return gcn_normalize(g.adjacency()); }

TransitionMatrix transition_matrix(const Graph& g) {
  const Adjacency& a = g.adjacency();
  const std::size_t n = a.num_nodes();
  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_offsets.assign(1, 0);
  for (std::size_t u = 0; u < n; ++u) {
    // T[u][v] = A[u][v] / d_v
    for (auto v : a.neighbors(u)) {
      m.col_indices.push_back(v);
      m.values.push_back(1.0 / static_cast<double>(a.degree(v)));
    }
    m.row_offsets.push_back(m.col_indices.size());
  }
  return {std::move(m)};
}

Matrix diffusion_diagonals(const TransitionMatrix& t, std::size_t p) {
  if (p < 1) throw GraphError("diffusion_diagonals: walk length must be >= 1");
  const SparseMatrix& tm = t.matrix;
  const std::size_t n = tm.rows;
  // Row b of T^T lists where mass at b flows in one step.
  const SparseMatrix push = tm.transposed();
  Matrix out(n, p);
  std::vector<double> cur(n, 0.0), next(n, 0.0);
  std::vector<std::uint32_t> frontier, next_frontier;
  std::vector<char> in_next(n, 0);
  for (std::size_t src = 0; src < n; ++src) {
    frontier.assign(1, static_cast<std::uint32_t>(src));
    cur[src] = 1.0;
    for (std::size_t step = 0; step < p; ++step) {
      next_frontier.clear();
      for (auto b : frontier) {
        const double mass = cur[b];
        for (std::size_t e = push.row_offsets[b]; e < push.row_offsets[b + 1]; ++e) {
          const auto a = push.col_indices[e];
          next[a] += push.values[e] * mass;
          if (!in_next[a]) {
            in_next[a] = 1;
            next_frontier.push_back(a);
          }
        }
        cur[b] = 0.0;
      }
      out(src, step) = next[src];
      for (auto a : next_frontier) in_next[a] = 0;
      std::swap(cur, next);
      std::swap(frontier, next_frontier);
    }
    for (auto b : frontier) cur[b] = 0.0;
  }
  return out;
}

}  // namespace fedtad
