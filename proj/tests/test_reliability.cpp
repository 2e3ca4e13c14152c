#include <doctest.h>

#include <numeric>

#include "fedtad/dataset.hpp"
#include "fedtad/reliability.hpp"
#include "support.hpp"

using namespace fedtad;

namespace {

ClientShard shard_of(Graph g, std::vector<std::uint32_t> train) {
  ClientShard s;
  s.global_ids.resize(g.num_nodes());
  std::iota(s.global_ids.begin(), s.global_ids.end(), 0u);
  s.graph = std::move(g);
  s.train = std::move(train);
  return s;
}

Graph clique(std::size_t n, int label) {
  std::vector<Edge> edges;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j) edges.push_back({i, j});
  Matrix x(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = 0.2;
    x(i, 1) = 1.0;
    x(i, 2) = -0.4;
  }
  return build_graph(edges, x, std::vector<int>(n, label), 2);
}

}  // namespace

TEST_SUITE("reliability") {
  TEST_CASE("homophily hand cases") {
    const Graph all0 = build_graph(std::vector<Edge>{{0, 1}, {1, 2}}, Matrix(3, 1), {0, 0, 0}, 1);
    CHECK(class_homophily(all0, 0) == 1.0);

    const Graph path = build_graph(std::vector<Edge>{{0, 1}, {1, 2}}, Matrix(3, 1), {0, 0, 1}, 2);
    CHECK(class_homophily(path, 0) == 0.5);
    CHECK(class_homophily(path, 1) == 0.0);

    const Graph lonely = build_graph(std::vector<Edge>{{0, 1}}, Matrix(3, 1), {0, 0, 1}, 3);
    CHECK_FALSE(class_homophily(lonely, 1).has_value());
    CHECK_FALSE(class_homophily(lonely, 2).has_value());
  }

  TEST_CASE("homophily matches edge enumeration on random labeled graphs") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Graph g = testing::random_graph(4 + seed % 17, 0.3, 3, 1, seed, 0.2);
      for (int c = 0; c < 3; ++c) CHECK(class_homophily(g, c) == testing::enumerate_homophily(g, c));
    }
  }

  TEST_CASE("hybrid embeddings") {
    const Matrix x = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    const Graph edgeless = build_graph(std::vector<Edge>{}, x, {0, 0, 0}, 1);
    const Matrix e = hybrid_embeddings(edgeless, 3);
    CHECK(e.cols() == 5);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(e(i, 0) == x(i, 0));
      CHECK(e(i, 1) == x(i, 1));
      for (std::size_t j = 2; j < 5; ++j) CHECK(e(i, j) == 0.0);
    }

    const Graph tri = build_graph(std::vector<Edge>{{0, 1}, {1, 2}, {0, 2}}, x, {0, 0, 0}, 1);
    const Matrix t = hybrid_embeddings(tri, 2);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(t(i, 0) == x(i, 0));
      CHECK(t(i, 2) == 0.0);
      CHECK(t(i, 3) == doctest::Approx(0.5).epsilon(1e-15));
    }
    CHECK(hybrid_embeddings(tri, 7).cols() == 9);
  }

  TEST_CASE("four-node fixture matches hand-evaluated reliability") {
    // Edges 0-1, 1-2, 2-3, 0-2; T^2 diagonal = (5/12, 5/12, 2/3, 1/3), T^1 diagonal zero.
    const Graph g = build_graph(std::vector<Edge>{{0, 1}, {1, 2}, {2, 3}, {0, 2}},
                                Matrix::from_rows({{1, 0}, {1, 1}, {0, 1}, {2, 1}}), {0, 0, 1, 1}, 2);
    const ReliabilityVector phi = knowledge_reliability(shard_of(g, {0, 1, 2, 3}), 2);
    CHECK(std::abs(phi.phi[0] - 1.2020419109478153) < 1e-9);
    CHECK(std::abs(phi.phi[1] - 0.9112569122938741) < 1e-9);

    // Only training nodes count.
    const ReliabilityVector partial = knowledge_reliability(shard_of(g, {1, 3}), 2);
    CHECK(std::abs(partial.phi[0] - 0.7279670739753733) < 1e-9);
    CHECK(std::abs(partial.phi[1] - 0.4498234510602419) < 1e-9);
  }

  TEST_CASE("identical-feature clique gives the labeled count; absent classes score zero") {
    for (std::size_t n : {2u, 3u, 5u, 8u}) {
      const ReliabilityVector phi = knowledge_reliability(shard_of(clique(n, 0), [&] {
        std::vector<std::uint32_t> all(n);
        std::iota(all.begin(), all.end(), 0u);
        return all;
      }()), 4);
      CHECK(phi.phi[0] == doctest::Approx(static_cast<double>(n)).epsilon(1e-12));
      CHECK(phi.phi[1] == 0.0);
    }
  }

  TEST_CASE("isolated training nodes contribute zero") {
    const Graph g = build_graph(std::vector<Edge>{{0, 1}}, Matrix(3, 2, 1.0), {0, 0, 0}, 1);
    CHECK(knowledge_reliability(shard_of(g, {2}), 3).phi[0] == 0.0);
  }

  TEST_CASE("more labeled same-class nodes strictly raise reliability at homophily 1") {
    double prev = 0.0;
    for (std::uint32_t labeled = 1; labeled <= 8; ++labeled) {
      std::vector<std::uint32_t> train(labeled);
      std::iota(train.begin(), train.end(), 0u);
      const double phi = knowledge_reliability(shard_of(clique(8, 1), train), 3).phi[1];
      CHECK(phi > prev);
      prev = phi;
    }
  }

  TEST_CASE("tighter same-class features do not lower reliability") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SbmSpec spec;
      spec.nodes_per_class = {25, 25};
      spec.intra_prob = 0.2;
      spec.inter_prob = 0.0;
      spec.feature_dim = 4;
      spec.noise_std = 1.0;
      spec.seed = seed;
      std::vector<std::uint32_t> train(50);
      std::iota(train.begin(), train.end(), 0u);
      spec.class_center_separation = 1.0;
      const auto loose = knowledge_reliability(shard_of(generate_sbm(spec).graph, train), 5);
      spec.class_center_separation = 4.0;
      const auto tight = knowledge_reliability(shard_of(generate_sbm(spec).graph, train), 5);
      for (int c = 0; c < 2; ++c) CHECK(tight.phi[c] >= loose.phi[c]);
    }
  }

  TEST_CASE("perturbation") {
    const ReliabilityVector phi{{3.0, 0.0, 1.5, 0.2}};
    CHECK(perturb_reliability(phi, 0.0, 5) == phi);
    CHECK(perturb_reliability(phi, 0.1, 5) == perturb_reliability(phi, 0.1, 5));
    CHECK_FALSE(perturb_reliability(phi, 0.1, 5) == perturb_reliability(phi, 0.1, 6));
    for (std::uint64_t seed = 0; seed < 50; ++seed)
      for (double v : perturb_reliability(phi, 5.0, seed).phi) CHECK(v >= 0.0);
  }
}
