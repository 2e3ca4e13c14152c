#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fedtad/dataset.hpp"
#include "fedtad/errors.hpp"
#include "fedtad/fedtad_server.hpp"
#include "fedtad/reliability.hpp"
#include "fedtad/runtime.hpp"
#include "support.hpp"

using namespace fedtad;

namespace {

double ce(std::initializer_list<double> logits, std::size_t label) {
  double z = 0.0;
  for (double l : logits) z += std::exp(l);
  return -(*(logits.begin() + label) - std::log(z));
}

/// Pseudo graph with random features over a fixed adjacency, for loss checks.
PseudoGraph random_pseudo_graph(std::size_t b, std::size_t c, std::size_t f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> labels(b);
  for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(i % c);
  return make_pseudo_graph(testing::random_matrix(b, f, rng), labels, 2);
}

}  // namespace

TEST_SUITE("fedtad_server") {
  TEST_CASE("reliability weights are per-class simplices, zero columns for unseen classes") {
    const std::vector<ReliabilityVector> phi{{{2.0, 0.0, 1.0}}, {{6.0, 0.0, 3.0}}};
    const ReliabilityWeights rho(phi);
    CHECK(rho(0, 0) == 0.25);
    CHECK(rho(1, 0) == 0.75);
    CHECK(rho(0, 1) == 0.0);
    CHECK(rho(1, 1) == 0.0);
    CHECK(rho(0, 2) + rho(1, 2) == doctest::Approx(1.0));

    std::vector<ReliabilityVector> scaled = phi;
    for (auto& p : scaled)
      for (auto& v : p.phi) v *= 3.7;
    const ReliabilityWeights rho2(scaled);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t c = 0; c < 3; ++c) CHECK(rho2(k, c) == doctest::Approx(rho(k, c)).epsilon(1e-15));
  }

  TEST_CASE("semantic loss hand fixtures") {
    const std::vector<int> labels{0, 0, 1, 1};
    Tape tape;
    SUBCASE("perfect single client gives ~0") {
      Matrix l(4, 2, -40.0);
      for (std::size_t i = 0; i < 4; ++i) l(i, static_cast<std::size_t>(labels[i])) = 40.0;
      const std::vector<Var> logits{tape.constant(l)};
      const ReliabilityWeights rho(std::vector<ReliabilityVector>{{{1.0, 1.0}}});
      CHECK(semantic_loss(logits, labels, rho).item() < 1e-30);
    }
    SUBCASE("a client with zero reliability contributes nothing") {
      const Matrix a = Matrix::from_rows({{1, 0}, {0.5, 0.2}, {0, 1}, {0.3, 0.1}});
      const Matrix b = Matrix::from_rows({{-3, 3}, {2, -2}, {4, 1}, {0, 0}});
      const std::vector<Var> both{tape.constant(a), tape.constant(b)};
      const std::vector<Var> only_a{tape.constant(a)};
      const ReliabilityWeights two(std::vector<ReliabilityVector>{{{1.0, 2.0}}, {{0.0, 0.0}}});
      const ReliabilityWeights one(std::vector<ReliabilityVector>{{{1.0, 2.0}}});
      CHECK(semantic_loss(both, labels, two).item() == doctest::Approx(semantic_loss(only_a, labels, one).item()));
    }
    SUBCASE("two clients, two classes, hand evaluation") {
      const Matrix a = Matrix::from_rows({{2, 0}, {1, 1}, {0, 1}, {-1, 0.5}});
      const Matrix b = Matrix::from_rows({{0, 3}, {0.5, -0.5}, {1, 2}, {0, 0}});
      // phi_A = (3, 1), phi_B = (1, 3): rho_A = (0.75, 0.25), rho_B = (0.25, 0.75).
      const ReliabilityWeights rho(std::vector<ReliabilityVector>{{{3.0, 1.0}}, {{1.0, 3.0}}});
      const std::vector<Var> logits{tape.constant(a), tape.constant(b)};
      const double expected = 0.75 * (ce({2, 0}, 0) + ce({1, 1}, 0)) + 0.25 * (ce({0, 1}, 1) + ce({-1, 0.5}, 1)) +
                              0.25 * (ce({0, 3}, 0) + ce({0.5, -0.5}, 0)) + 0.75 * (ce({1, 2}, 1) + ce({0, 0}, 1));
      CHECK(std::abs(semantic_loss(logits, labels, rho).item() - expected) < 1e-9);
    }
  }

  TEST_CASE("divergence loss fixtures") {
    Tape tape;
    const ReliabilityWeights one(std::vector<ReliabilityVector>{{{1.0, 1.0}}});
    const std::vector<int> label{0};
    const Var p = tape.constant(Matrix::from_rows({{0.0, 0.0}}));
    const std::vector<Var> q{tape.constant(Matrix::from_rows({{std::log(0.9), std::log(0.1)}}))};
    const double kl = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    CHECK(std::abs(divergence_loss(p, q, label, one).item() - kl) < 1e-12);
    CHECK(std::abs(divergence_loss(p, q, label, one).item() - 0.5108) < 1e-4);

    const PseudoGraph pg = random_pseudo_graph(8, 3, 4, 1);
    const GcnModel g(4, 5, 3, 0.0, 1);
    const ReliabilityWeights rho3(std::vector<ReliabilityVector>{{{1.0, 2.0, 3.0}}});
    CHECK(divergence_loss(g, std::vector<GcnModel>{g}, rho3, pg) == 0.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const GcnModel a(4, 5, 3, 0.0, seed), b(4, 5, 3, 0.0, seed + 100);
      CHECK(divergence_loss(a, std::vector<GcnModel>{b}, rho3, pg) >= 0.0);
    }
  }

  TEST_CASE("generator gradients through the semantic and divergence terms match finite differences") {
    const std::size_t classes = 3, feat = 4;
    GeneratorModel gen(3, classes, 6, feat, 2);
    const GeneratorInputs in = sample_generator_inputs(6, classes, 3, 7);
    const PseudoGraph pg = make_pseudo_graph(generate_features(gen, 6, 7).first, in.labels, 2);
    const GcnModel global(feat, 5, classes, 0.0, 1);
    const std::vector<GcnModel> locals{GcnModel(feat, 5, classes, 0.0, 2), GcnModel(feat, 5, classes, 0.0, 3)};
    const ReliabilityWeights rho(std::vector<ReliabilityVector>{{{1.0, 0.5, 2.0}}, {{0.3, 1.0, 0.0}}});
    const double sem_err = testing::gradcheck_params(
        [&](Tape& tape) {
          const Var x = gen.forward(tape, in.noise, in.labels);
          std::vector<Var> ll;
          for (const auto& m : locals) ll.push_back(gcn_forward(tape, m, pg.norm_adj, x));
          return semantic_loss(ll, pg.labels, rho);
        },
        gen.weights().parameters());
    const double div_err = testing::gradcheck_params(
        [&](Tape& tape) {
          const Var x = gen.forward(tape, in.noise, in.labels);
          std::vector<Var> ll;
          for (const auto& m : locals) ll.push_back(gcn_forward(tape, m, pg.norm_adj, x));
          return divergence_loss(gcn_forward(tape, global, pg.norm_adj, x), ll, pg.labels, rho);
        },
        gen.weights().parameters());
    DistillConfig cfg;
    cfg.lambda_sem = 0.7;
    cfg.lambda_div = 0.3;
    const double obj_err = testing::gradcheck_params(
        [&](Tape& tape) {
          return generator_objective(gen.forward(tape, in.noise, in.labels), global, locals, rho, pg, cfg);
        },
        gen.weights().parameters());
    CHECK(sem_err < 1e-4);
    CHECK(div_err < 1e-4);
    CHECK(obj_err < 1e-4);
  }

  TEST_CASE("a small generator step does not decrease the ascent objective") {
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      GeneratorModel gen(4, 3, 8, 5, seed);
      const GeneratorInputs in = sample_generator_inputs(9, 3, 4, seed);
      const PseudoGraph pg = make_pseudo_graph(generate_features(gen, 9, seed).first, in.labels, 3);
      const GcnModel global(5, 6, 3, 0.0, seed + 1);
      const std::vector<GcnModel> locals{GcnModel(5, 6, 3, 0.0, seed + 2), GcnModel(5, 6, 3, 0.0, seed + 3)};
      const ReliabilityWeights rho(std::vector<ReliabilityVector>{{{1.0, 2.0, 0.5}}, {{2.0, 1.0, 1.0}}});
      const DistillConfig cfg;
      auto ascent = [&] {
        Tape tape;
        return -generator_objective(gen.forward(tape, in.noise, in.labels), global, locals, rho, pg, cfg).item();
      };
      const double before = ascent();
      {
        Tape tape;
        tape.backward(generator_objective(gen.forward(tape, in.noise, in.labels), global, locals, rho, pg, cfg));
      }
      OptimizerState st;
      st.learning_rate = 1e-4;
      auto params = gen.weights().parameters();
      adam_step(params, st);
      if (ascent() < before) ++failures;
    }
    CHECK(failures <= 1);
  }

  TEST_CASE("refinement is a fixed point when every local equals the global") {
    const PseudoGraph probe = random_pseudo_graph(12, 3, 6, 4);
    GcnModel global(6, 8, 3, 0.0, 4);
    const GcnModel before = global;
    const std::vector<GcnModel> locals{global};
    const std::vector<ReliabilityVector> phi{{{1.0, 2.0, 3.0}}};
    CHECK(divergence_loss(global, locals, ReliabilityWeights(phi), probe) == 0.0);
    DistillConfig cfg;
    cfg.outer_iters = 3;
    cfg.generator_steps = 2;
    cfg.distill_steps = 3;
    cfg.num_pseudo_nodes = 12;
    FedTadRefiner refiner(cfg, 6, 3, 1);
    refiner.refine(global, locals, phi, 1);
    double moved = 0.0;
    for (std::size_t t = 0; t < global.weights().size(); ++t) {
      Matrix d = global.weights()[t].tensor.value;
      linalg::axpy(-1.0, before.weights()[t].tensor.value, d);
      moved += d.frobenius_norm() * d.frobenius_norm();
    }
    CHECK(std::sqrt(moved) < 1e-6);
    for (const auto& row : refiner.trace()) CHECK(row.diverg == 0.0);
  }

  TEST_CASE("zero outer iterations return the input global") {
    GcnModel global(6, 8, 3, 0.0, 4);
    const GcnModel before = global;
    DistillConfig cfg;
    cfg.outer_iters = 0;
    FedTadRefiner refiner(cfg, 6, 3, 1, /*allow_zero_iters=*/true);
    refiner.refine(global, std::vector<GcnModel>{GcnModel(6, 8, 3, 0.0, 9)},
                   std::vector<ReliabilityVector>{{{1.0, 1.0, 1.0}}}, 1);
    CHECK(global.weights().values_equal(before.weights()));
    CHECK_THROWS_AS(FedTadRefiner(cfg, 6, 3, 1), ConfigError);
  }

  TEST_CASE("non-finite losses abort with round and loss context") {
    GcnModel global(4, 5, 2, 0.0, 1);
    for (auto& e : global.weights())
      for (auto& v : e.tensor.value.values()) v *= 1e200;
    FedTadRefiner refiner(DistillConfig{}, 4, 2, 3);
    try {
      refiner.refine(global, std::vector<GcnModel>{global}, std::vector<ReliabilityVector>{{{1.0, 1.0}}}, 7);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("round 7") != std::string::npos);
      CHECK(msg.find("L_diverg") != std::string::npos);
    }
  }

  TEST_CASE("distillation toward class-specialized clients does not hurt the naive average") {
    int not_worse = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SbmSpec spec;
      spec.nodes_per_class = {60, 60};
      spec.intra_prob = 0.1;
      spec.inter_prob = 0.01;
      spec.feature_dim = 6;
      spec.class_center_separation = 1.5;
      spec.seed = seed;
      const Graph g = generate_sbm(spec).graph;
      // Client A sees 50 class-0 and 10 class-1 nodes, client B the reverse; the held-out graph is fresh.
      std::vector<std::uint32_t> a_nodes, b_nodes;
      for (std::uint32_t i = 0; i < 120; ++i) {
        const bool first_part = (i % 60) < 50;
        ((g.label(i) == 0) == first_part ? a_nodes : b_nodes).push_back(i);
      }
      Partition p{2, std::vector<std::uint32_t>(120)};
      for (auto i : b_nodes) p.assignments[i] = 1;
      const auto shards = induce_shards(g, p, {0.6, 0.2, 0.2}, seed);

      FedConfig cfg;
      cfg.seed = seed;
      cfg.hidden_dim = 16;
      cfg.dropout = 0.0;
      const GcnModel init = initial_model(6, 2, cfg);
      std::vector<GcnModel> locals;
      std::vector<ReliabilityVector> phi;
      std::vector<ModelWeights> trained;
      for (const auto& s : shards) {
        LocalTrainer t(s, cfg);
        trained.push_back(t.update(init.weights(), 40));
        GcnModel m = init;
        m.weights().assign_values(trained.back());
        locals.push_back(m);
        phi.push_back(knowledge_reliability(s, 5));
      }
      GcnModel avg = init;
      avg.weights().assign_values(fedavg_aggregate(trained, std::vector<std::size_t>{60, 60}));
      GcnModel refined = avg;
      DistillConfig dc;
      dc.knn_k = 3;
      dc.distill_lr = 1e-2;
      FedTadRefiner(dc, 6, 2, seed).refine(refined, locals, phi, 1);

      spec.seed = seed + 1000;
      const Graph held = generate_sbm(spec).graph;
      std::vector<std::uint32_t> all(120);
      std::iota(all.begin(), all.end(), 0u);
      const NormalizedAdjacency adj = gcn_normalize(held);
      const auto acc = [&](const GcnModel& m) {
        return count_correct(gcn_logits(m, adj, held.features()), held.labels(), all);
      };
      if (acc(refined) >= acc(avg)) ++not_worse;
    }
    CHECK(not_worse == 5);
  }

  TEST_CASE("knn degree must stay below the pseudo node count") {
    DistillConfig cfg;
    cfg.knn_k = 8;
    CHECK_THROWS_AS(FedTadRefiner(cfg, 4, 2, 0), ConfigError);
  }
}
