#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "fedtad/dataset.hpp"
#include "fedtad/errors.hpp"
#include "fedtad/partition.hpp"
#include "fedtad/reliability.hpp"
#include "support.hpp"

using namespace fedtad;

namespace {

Graph two_cliques() {
  std::vector<Edge> edges;
  for (std::uint32_t base : {0u, 4u})
    for (std::uint32_t i = 0; i < 4; ++i)
      for (std::uint32_t j = i + 1; j < 4; ++j) edges.push_back({base + i, base + j});
  edges.push_back({3, 4});
  return build_graph(edges, Matrix(8, 1), std::vector<int>(8, 0), 1);
}

/// Communities given as consecutive blocks of the requested sizes, on a graph of disjoint paths.
std::pair<std::vector<std::uint32_t>, Adjacency> blocks(const std::vector<std::size_t>& sizes) {
  std::vector<std::uint32_t> labels;
  std::vector<Edge> edges;
  for (std::uint32_t c = 0; c < sizes.size(); ++c)
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      if (i > 0) edges.push_back({static_cast<std::uint32_t>(labels.size() - 1), static_cast<std::uint32_t>(labels.size())});
      labels.push_back(c);
    }
  return {labels, Adjacency::from_edges(labels.size(), edges)};
}

ClientShard labeled_shard(const Graph& g, std::vector<std::uint32_t> train) {
  ClientShard s;
  s.graph = g;
  s.global_ids.resize(g.num_nodes());
  std::iota(s.global_ids.begin(), s.global_ids.end(), 0u);
  s.train = std::move(train);
  return s;
}

}  // namespace

TEST_SUITE("partitioner") {
  TEST_CASE("two bridged 4-cliques split at the bridge with optimal modularity") {
    const Graph g = two_cliques();
    double best = -1.0;
    for (unsigned mask = 0; mask < (1u << 7); ++mask) {  // node 7 fixed in community 1
      std::vector<std::uint32_t> labels(8, 1);
      for (unsigned i = 0; i < 7; ++i) labels[i] = (mask >> i) & 1u;
      best = std::max(best, modularity(g.adjacency(), labels));
    }
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const LouvainResult r = louvain(g, seed);
      CHECK(r.num_communities == 2);
      for (std::uint32_t i = 1; i < 4; ++i) CHECK(r.communities[i] == r.communities[0]);
      for (std::uint32_t i = 5; i < 8; ++i) CHECK(r.communities[i] == r.communities[4]);
      CHECK(r.communities[0] != r.communities[4]);
      CHECK(modularity(g.adjacency(), r.communities) == doctest::Approx(best).epsilon(1e-9));
      CHECK(std::abs(r.level_modularity.back() - best) <= 1e-9);
    }
  }

  TEST_CASE("triangle is one community; edgeless graph is an error") {
    const Graph t = build_graph(std::vector<Edge>{{0, 1}, {1, 2}, {0, 2}}, Matrix(3, 1), {0, 0, 0}, 1);
    CHECK(louvain(t, 0).num_communities == 1);
    const Graph e = build_graph(std::vector<Edge>{}, Matrix(3, 1), {0, 0, 0}, 1);
    CHECK_THROWS_AS(louvain(e, 0), PartitionError);
  }

  TEST_CASE("louvain modularity never decreases across levels") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Graph g = testing::random_graph(60, 0.08, 2, 1, seed);
      if (g.num_edges() == 0) continue;
      const LouvainResult r = louvain(g, seed);
      std::vector<std::uint32_t> singletons(60);
      std::iota(singletons.begin(), singletons.end(), 0u);
      CHECK(modularity(g.adjacency(), r.communities) >= modularity(g.adjacency(), singletons));
      for (std::size_t i = 1; i < r.level_modularity.size(); ++i)
        CHECK(r.level_modularity[i] >= r.level_modularity[i - 1] - 1e-12);
    }
  }

  TEST_CASE("greedy largest-first packing") {
    auto [labels, adj] = blocks({10, 6, 5, 3});
    const Partition p = assign_communities(labels, adj, 2, 0);
    auto sizes = p.client_sizes();
    std::sort(sizes.begin(), sizes.end());
    CHECK(sizes == std::vector<std::size_t>{11, 13});

    const Partition one = assign_communities(labels, adj, 1, 0);
    CHECK(std::all_of(one.assignments.begin(), one.assignments.end(), [](auto c) { return c == 0; }));

    auto [eq, eq_adj] = blocks({4, 4, 4, 4});
    const Partition four = assign_communities(eq, eq_adj, 4, 3);
    CHECK(four.client_sizes() == std::vector<std::size_t>{4, 4, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) CHECK(four.assignments[i] == four.assignments[i - i % 4]);

    CHECK_THROWS_AS(assign_communities(labels, adj, 0, 0), PartitionError);
    CHECK_THROWS_AS(assign_communities(labels, adj, 25, 0), PartitionError);
  }

  TEST_CASE("too few communities are split until there are K") {
    auto [labels, adj] = blocks({12});
    const Partition p = assign_communities(labels, adj, 3, 0);
    p.validate();
    CHECK(p.num_clients == 3);
  }

  TEST_CASE("packing balance: max - min <= largest community") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Graph g = testing::random_graph(80, 0.05, 2, 1, seed);
      const LouvainResult r = louvain(g, seed);
      std::vector<std::size_t> comm_sizes(r.num_communities, 0);
      for (auto c : r.communities) ++comm_sizes[c];
      const std::size_t largest = *std::max_element(comm_sizes.begin(), comm_sizes.end());
      const Partition p = assign_communities(r.communities, g.adjacency(), 4, seed);
      p.validate();
      const auto s = p.client_sizes();
      CHECK(*std::max_element(s.begin(), s.end()) - *std::min_element(s.begin(), s.end()) <= largest);
    }
  }

  TEST_CASE("partition json round trip") {
    auto [labels, adj] = blocks({5, 4, 3});
    const Partition p = assign_communities(labels, adj, 2, 1);
    const auto path = std::filesystem::temp_directory_path() / "fedtad_partition_rt.json";
    write_partition(p, path);
    CHECK(read_partition(path) == p);
  }

  TEST_CASE("split counts floor then distribute") {
    CHECK(split_counts(10, {}) == std::array<std::size_t, 3>{2, 4, 4});
    CHECK(split_counts(7, {}) == std::array<std::size_t, 3>{1, 3, 3});
    const auto c = split_counts(13, {});
    CHECK(c[0] + c[1] + c[2] == 13);
  }

  TEST_CASE("induced shards drop cut edges, cover all nodes, keep features and labels") {
    const Graph g = testing::random_graph(40, 0.15, 3, 4, 9);
    Partition p{2, std::vector<std::uint32_t>(40)};
    for (std::uint32_t i = 0; i < 40; ++i) p.assignments[i] = i % 2;
    const auto shards = induce_shards(g, p, {}, 5);
    REQUIRE(shards.size() == 2);
    std::set<std::uint32_t> all;
    std::size_t inner_edges = 0;
    for (const auto& s : shards) {
      all.insert(s.global_ids.begin(), s.global_ids.end());
      inner_edges += s.graph.num_edges();
      for (std::size_t i = 0; i < s.global_ids.size(); ++i) {
        CHECK(s.graph.label(i) == g.label(s.global_ids[i]));
        for (std::size_t f = 0; f < 4; ++f) CHECK(s.graph.features()(i, f) == g.features()(s.global_ids[i], f));
      }
      std::set<std::uint32_t> seen;
      for (const auto* split : {&s.train, &s.val, &s.test})
        for (auto i : *split) {
          CHECK(seen.insert(i).second);
          CHECK(s.graph.label(i) != kUnlabeled);
        }
      CHECK_FALSE(s.train.empty());
    }
    CHECK(all.size() == 40);
    std::size_t same_side = 0;
    for (const auto& e : g.edge_list()) same_side += (e.u % 2) == (e.v % 2);
    CHECK(inner_edges == same_side);
  }

  TEST_CASE("stratified split sizes on ten labeled nodes of one class") {
    const Graph g = build_graph(std::vector<Edge>{{0, 1}}, Matrix(10, 1), std::vector<int>(10, 0), 1);
    const auto shards = induce_shards(g, Partition{1, std::vector<std::uint32_t>(10, 0)}, {}, 0);
    CHECK(shards[0].train.size() == 2);
    CHECK(shards[0].val.size() == 4);
    CHECK(shards[0].test.size() == 4);
  }

  TEST_CASE("a client without labeled nodes is an error") {
    const Graph g = build_graph(std::vector<Edge>{}, Matrix(4, 1), {0, 0, kUnlabeled, kUnlabeled}, 1);
    CHECK_THROWS_AS(induce_shards(g, Partition{2, {0, 0, 1, 1}}, {}, 0), PartitionError);
  }

  TEST_CASE("node variation removes every edge and nothing else") {
    const Graph g = testing::random_graph(30, 0.2, 2, 3, 2);
    const auto shards = induce_shards(g, Partition{1, std::vector<std::uint32_t>(30, 0)}, {}, 0);
    const auto stripped = simulate_node_variation(shards);
    CHECK(stripped[0].graph.num_edges() == 0);
    CHECK(stripped[0].graph.features() == shards[0].graph.features());
    CHECK(stripped[0].train == shards[0].train);
    CHECK(gcn_normalize(stripped[0].graph).matrix.to_dense() == SparseMatrix::identity(30).to_dense());
  }

  TEST_CASE("topology variation adds fresh edges only") {
    const Graph g = testing::random_graph(20, 0.2, 2, 2, 4);
    const ClientShard base = labeled_shard(g, {0, 1, 2});
    const auto same = simulate_topology_variation(base, 3, 0, 1);
    for (const auto& s : same) CHECK(s.graph == base.graph);

    const auto perturbed = simulate_topology_variation(base, 3, 7, 1, true);
    CHECK(perturbed[0].graph == base.graph);
    for (std::size_t k = 1; k < 3; ++k) {
      CHECK(perturbed[k].graph.num_edges() == g.num_edges() + 7);
      for (const auto& e : g.edge_list()) CHECK(perturbed[k].graph.adjacency().has_edge(e.u, e.v));
    }
    CHECK_THROWS_AS(simulate_topology_variation(base, 2, 1000, 1), PartitionError);
  }

  TEST_CASE("random edges never raise homophily of a fully homophilous base") {
    SbmSpec spec;
    spec.nodes_per_class = {15, 15};
    spec.intra_prob = 0.4;
    spec.inter_prob = 0.0;
    const Graph g = generate_sbm(spec).graph;
    const ClientShard base = labeled_shard(g, {0, 20});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto shards = simulate_topology_variation(base, 2, 30, seed, true);
      for (int c = 0; c < 2; ++c) CHECK(*class_homophily(shards[1].graph, c) <= *class_homophily(g, c));
    }
  }
}
