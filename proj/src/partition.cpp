#include "fedtad/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "fedtad/errors.hpp"
#include "fedtad/seed.hpp"

namespace fedtad {
namespace {

constexpr double kMinLevelGain = 1e-7;

/// Symmetric weighted graph used across Louvain levels. W[i][i] may be nonzero after coarsening.
struct WeightedGraph {
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj;
  std::vector<double> degree;  // sum_j W_ij, self weight included
  double total = 0.0;          // 2m

  std::size_t size() const { return adj.size(); }
};

WeightedGraph from_adjacency(const Adjacency& a) {
  WeightedGraph w;
  w.adj.resize(a.num_nodes());
  w.degree.assign(a.num_nodes(), 0.0);
  for (std::size_t u = 0; u < a.num_nodes(); ++u) {
    for (auto v : a.neighbors(u)) w.adj[u].emplace_back(v, 1.0);
    w.degree[u] = static_cast<double>(a.degree(u));
    w.total += w.degree[u];
  }
  return w;
}

double weighted_modularity(const WeightedGraph& g, std::span<const std::uint32_t> comm) {
  const std::size_t nc = comm.empty() ? 0 : *std::max_element(comm.begin(), comm.end()) + 1;
  std::vector<double> inside(nc, 0.0), tot(nc, 0.0);
  for (std::size_t u = 0; u < g.size(); ++u) {
    tot[comm[u]] += g.degree[u];
    for (const auto& [v, w] : g.adj[u])
      if (comm[v] == comm[u]) inside[comm[u]] += w;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < nc; ++c) q += inside[c] / g.total - (tot[c] / g.total) * (tot[c] / g.total);
  return q;
}

/// Renumbers labels densely in order of first appearance; returns the count.
std::size_t renumber(std::vector<std::uint32_t>& labels) {
  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  for (auto& l : labels) {
    const auto [it, inserted] = remap.emplace(l, static_cast<std::uint32_t>(remap.size()));
    l = it->second;
  }
  return remap.size();
}

/// Sweeps nodes in `order`, moving each to the neighboring community with the
/// largest positive modularity gain, until a sweep gains < kMinLevelGain.
/// Returns true if any node moved.
bool local_moving(const WeightedGraph& g, std::vector<std::uint32_t>& comm, std::span<const std::uint32_t> order) {
  const std::size_t n = g.size();
  std::vector<double> tot(n, 0.0);
  for (std::size_t u = 0; u < n; ++u) tot[comm[u]] += g.degree[u];
  std::vector<double> link(n, 0.0);
  std::vector<std::uint32_t> touched;
  bool any_move = false;
  double q = weighted_modularity(g, comm);
  while (true) {
    bool moved = false;
    for (auto u : order) {
      const std::uint32_t old = comm[u];
      const double ku = g.degree[u];
      touched.clear();
      for (const auto& [v, w] : g.adj[u]) {
        if (v == u) continue;
        if (link[comm[v]] == 0.0) touched.push_back(comm[v]);
        link[comm[v]] += w;
      }
      tot[old] -= ku;
      std::uint32_t best = old;
      double best_gain = link[old] - tot[old] * ku / g.total;
      for (auto c : touched) {
        const double gain = link[c] - tot[c] * ku / g.total;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += ku;
      for (auto c : touched) link[c] = 0.0;
      link[old] = 0.0;
      if (best != old) {
        comm[u] = best;
        moved = true;
      }
    }
    if (!moved) break;
    any_move = true;
    const double q_new = weighted_modularity(g, comm);
    const double gain = q_new - q;
    q = q_new;
    if (gain < kMinLevelGain) break;
  }
  return any_move;
}

WeightedGraph aggregate(const WeightedGraph& g, std::span<const std::uint32_t> comm, std::size_t nc) {
  WeightedGraph out;
  out.adj.resize(nc);
  out.degree.assign(nc, 0.0);
  out.total = g.total;
  std::vector<std::unordered_map<std::uint32_t, double>> acc(nc);
  for (std::size_t u = 0; u < g.size(); ++u) {
    out.degree[comm[u]] += g.degree[u];
    for (const auto& [v, w] : g.adj[u]) acc[comm[u]][comm[v]] += w;
  }
  for (std::size_t c = 0; c < nc; ++c) {
    out.adj[c].assign(acc[c].begin(), acc[c].end());
    std::sort(out.adj[c].begin(), out.adj[c].end());
  }
  return out;
}

std::vector<std::uint32_t> bfs_order(const Adjacency& a, std::span<const std::uint32_t> members) {
  std::vector<std::uint32_t> sorted(members.begin(), members.end());
  std::sort(sorted.begin(), sorted.end());
  std::unordered_map<std::uint32_t, char> visited;
  for (auto m : sorted) visited[m] = 0;
  std::vector<std::uint32_t> order;
  order.reserve(sorted.size());
  for (auto start : sorted) {
    if (visited[start]) continue;
    std::queue<std::uint32_t> q;
    q.push(start);
    visited[start] = 1;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      order.push_back(u);
      if (u >= a.num_nodes()) continue;
      for (auto v : a.neighbors(u)) {
        const auto it = visited.find(v);
        if (it != visited.end() && !it->second) {
          it->second = 1;
          q.push(v);
        }
      }
    }
  }
  return order;
}

}  // namespace

double modularity(const Adjacency& adjacency, std::span<const std::uint32_t> communities) {
  if (communities.size() != adjacency.num_nodes()) throw PartitionError("modularity: label count mismatch");
  if (adjacency.num_edges() == 0) throw PartitionError("modularity undefined on an edgeless graph");
  return weighted_modularity(from_adjacency(adjacency), communities);
}

LouvainResult louvain(const Graph& g, std::uint64_t seed) {
  if (g.num_edges() == 0) throw PartitionError("louvain: graph has no edges");
  std::mt19937_64 rng(seed);
  WeightedGraph level = from_adjacency(g.adjacency());
  LouvainResult result;
  result.communities.resize(g.num_nodes());
  std::iota(result.communities.begin(), result.communities.end(), 0u);
  result.level_modularity.push_back(weighted_modularity(level, result.communities));

  while (true) {
    std::vector<std::uint32_t> comm(level.size());
    std::iota(comm.begin(), comm.end(), 0u);
    std::vector<std::uint32_t> order(level.size());
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    if (!local_moving(level, comm, order)) break;
    const std::size_t nc = renumber(comm);
    for (auto& c : result.communities) c = comm[c];
    const double q = weighted_modularity(level, comm);
    const double gain = q - result.level_modularity.back();
    result.level_modularity.push_back(q);
    if (gain < kMinLevelGain || nc == level.size()) break;
    level = aggregate(level, comm, nc);
  }
  result.num_communities = renumber(result.communities);
  return result;
}

std::vector<std::size_t> Partition::client_sizes() const {
  std::vector<std::size_t> sizes(num_clients, 0);
  for (auto a : assignments) ++sizes.at(a);
  return sizes;
}

void Partition::validate() const {
  if (num_clients < 1) throw PartitionError("partition needs at least one client");
  for (auto a : assignments)
    if (a >= num_clients) throw PartitionError("assignment " + std::to_string(a) + " outside [0, K)");
  const auto sizes = client_sizes();
  for (std::size_t k = 0; k < sizes.size(); ++k)
    if (sizes[k] == 0) throw PartitionError("client " + std::to_string(k) + " received no nodes");
}

Partition assign_communities(std::span<const std::uint32_t> communities, const Adjacency& adjacency,
                             std::size_t num_clients, std::uint64_t seed) {
  const std::size_t n = communities.size();
  if (num_clients < 1 || num_clients > n) {
    throw PartitionError("client count " + std::to_string(num_clients) + " must be in [1, " + std::to_string(n) + "]");
  }
  std::vector<std::uint32_t> labels(communities.begin(), communities.end());
  std::size_t nc = renumber(labels);
  std::vector<std::vector<std::uint32_t>> members(nc);
  for (std::size_t u = 0; u < n; ++u) members[labels[u]].push_back(static_cast<std::uint32_t>(u));

  while (members.size() < num_clients) {
    const auto largest = std::max_element(members.begin(), members.end(),
                                          [](const auto& a, const auto& b) { return a.size() < b.size(); });
    const auto order = bfs_order(adjacency, *largest);
    const std::size_t half = (order.size() + 1) / 2;
    *largest = std::vector<std::uint32_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
    members.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
  }

  std::vector<std::size_t> ids(members.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return members[a].size() > members[b].size(); });

  Partition p;
  p.num_clients = num_clients;
  p.assignments.assign(n, 0);
  std::vector<std::size_t> load(num_clients, 0);
  for (auto c : ids) {
    const auto target = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    load[target] += members[c].size();
    for (auto u : members[c]) p.assignments[u] = static_cast<std::uint32_t>(target);
  }
  p.validate();
  return p;
}

void write_partition(const Partition& p, const std::filesystem::path& path) {
  nlohmann::json j = {{"K", p.num_clients}, {"assignments", p.assignments}};
  std::ofstream out(path);
  if (!out) throw PartitionError("cannot write " + path.string());
  out << j.dump() << "\n";
}

Partition read_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PartitionError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    Partition p;
    p.num_clients = j.at("K").get<std::size_t>();
    p.assignments = j.at("assignments").get<std::vector<std::uint32_t>>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw PartitionError(path.string() + ": " + e.what());
  }
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> shares{ratios.train, ratios.val, ratios.test};
  const double total = shares[0] + shares[1] + shares[2];
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * shares[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> by_frac{0, 1, 2};
  std::stable_sort(by_frac.begin(), by_frac.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-12; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[by_frac[i % 3]];
  return counts;
}

std::vector<ClientShard> induce_shards(const Graph& g, const Partition& p, const SplitRatios& ratios,
                                       std::uint64_t seed) {
  if (p.assignments.size() != g.num_nodes()) throw PartitionError("partition size does not match graph");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || ratios.train + ratios.val + ratios.test <= 0)
    throw ConfigError("split ratios must be nonnegative with a positive sum");
  p.validate();
  std::vector<std::vector<std::uint32_t>> nodes(p.num_clients);
  for (std::size_t u = 0; u < g.num_nodes(); ++u) nodes[p.assignments[u]].push_back(static_cast<std::uint32_t>(u));

  std::vector<ClientShard> shards;
  shards.reserve(p.num_clients);
  for (std::size_t k = 0; k < p.num_clients; ++k) {
    ClientShard s;
    s.client_id = k;
    s.global_ids = nodes[k];
    s.graph = induced_subgraph(g, s.global_ids);

    std::vector<std::vector<std::uint32_t>> by_class(static_cast<std::size_t>(g.num_classes()));
    for (std::size_t i = 0; i < s.graph.num_nodes(); ++i)
      if (s.graph.label(i) != kUnlabeled) by_class[static_cast<std::size_t>(s.graph.label(i))].push_back(static_cast<std::uint32_t>(i));
    std::size_t labeled = 0;
    std::mt19937_64 rng(mix_seed(seed, k));
    for (auto& members : by_class) {
      labeled += members.size();
      std::shuffle(members.begin(), members.end(), rng);
      const auto counts = split_counts(members.size(), ratios);
      auto it = members.begin();
      s.train.insert(s.train.end(), it, it + static_cast<std::ptrdiff_t>(counts[0]));
      it += static_cast<std::ptrdiff_t>(counts[0]);
      s.val.insert(s.val.end(), it, it + static_cast<std::ptrdiff_t>(counts[1]));
      it += static_cast<std::ptrdiff_t>(counts[1]);
      s.test.insert(s.test.end(), it, members.end());
    }
    if (labeled == 0) {
      throw PartitionError("client " + std::to_string(k) + " has no labeled nodes; try a different seed or client count");
    }
    if (s.train.empty()) {
      throw PartitionError("client " + std::to_string(k) +
                           " has an empty training split; try a different seed, client count or split ratios");
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    shards.push_back(std::move(s));
  }
  return shards;
}

std::vector<ClientShard> simulate_node_variation(std::vector<ClientShard> shards) {
  for (auto& s : shards) s.graph = s.graph.with_adjacency(Adjacency(s.graph.num_nodes()));
  return shards;
}

std::vector<ClientShard> simulate_topology_variation(const ClientShard& base, std::size_t num_clients,
                                                     std::size_t edges_to_add, std::uint64_t seed,
                                                     bool keep_first_unperturbed) {
  const std::size_t n = base.graph.num_nodes();
  const std::size_t existing = base.graph.num_edges();
  const std::size_t capacity = n * (n - (n ? 1 : 0)) / 2 - existing;
  if (edges_to_add > capacity) {
    throw PartitionError("cannot add " + std::to_string(edges_to_add) + " edges: only " + std::to_string(capacity) +
                         " node pairs are unconnected");
  }
  std::vector<ClientShard> out;
  out.reserve(num_clients);
  const auto base_edges = base.graph.edge_list();
  for (std::size_t k = 0; k < num_clients; ++k) {
    ClientShard s = base;
    s.client_id = k;
    s.reliability.reset();
    if (edges_to_add > 0 && !(keep_first_unperturbed && k == 0)) {
      std::mt19937_64 rng(mix_seed(seed, k));
      std::vector<Edge> added;
      if (edges_to_add * 4 > capacity) {
        std::vector<Edge> complement;
        complement.reserve(capacity);
        for (std::uint32_t u = 0; u < n; ++u)
          for (std::uint32_t v = u + 1; v < n; ++v)
            if (!base.graph.adjacency().has_edge(u, v)) complement.push_back({u, v});
        for (std::size_t i = 0; i < edges_to_add; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, complement.size() - 1);
          std::swap(complement[i], complement[pick(rng)]);
        }
        added.assign(complement.begin(), complement.begin() + static_cast<std::ptrdiff_t>(edges_to_add));
      } else {
        std::set<Edge> chosen;
        std::uniform_int_distribution<std::uint32_t> node(0, static_cast<std::uint32_t>(n - 1));
        while (chosen.size() < edges_to_add) {
          std::uint32_t u = node(rng), v = node(rng);
          if (u == v) continue;
          if (u > v) std::swap(u, v);
          if (base.graph.adjacency().has_edge(u, v)) continue;
          chosen.insert({u, v});
        }
        added.assign(chosen.begin(), chosen.end());
      }
      std::vector<Edge> all = base_edges;
      all.insert(all.end(), added.begin(), added.end());
      s.graph = s.graph.with_adjacency(Adjacency::from_edges(n, all));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fedtad
