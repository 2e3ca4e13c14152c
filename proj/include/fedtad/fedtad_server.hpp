#pragma once

// Server-side refinement of the aggregated global model by data-free
// distillation on a generated pseudo graph, weighted per class by the
// reliability each client reported.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedtad/graph.hpp"
#include "fedtad/models.hpp"
#include "fedtad/optim.hpp"
#include "fedtad/reliability_vector.hpp"

namespace fedtad {

struct DistillConfig {
  double lambda_sem = 1e-1;  // lambda1
  double lambda_div = 1e-1;  // lambda2
  std::size_t outer_iters = 5;      // I
  std::size_t generator_steps = 3;  // I_g
  std::size_t distill_steps = 5;    // I_d
  std::size_t num_pseudo_nodes = 0;  // B; 0 means 4 * num_classes
  std::size_t knn_k = 5;
  double generator_lr = 1e-3;
  double distill_lr = 1e-3;
  std::size_t noise_dim = 32;
  std::size_t generator_hidden = 256;

  std::size_t pseudo_nodes(std::size_t num_classes) const {
    return num_pseudo_nodes == 0 ? 4 * num_classes : num_pseudo_nodes;
  }
  /// Throws ConfigError on zero counts or negative weights. `allow_zero_iters` admits I = 0.
  void validate(bool allow_zero_iters = false) const;
};

/// rho[k][c] = phi_k^c / sum_k phi_k^c; all-zero column when the class has no reliability anywhere.
class ReliabilityWeights {
 public:
  ReliabilityWeights() = default;
  explicit ReliabilityWeights(std::span<const ReliabilityVector> phi);

  std::size_t num_clients() const noexcept { return rho_.size(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  double operator()(std::size_t k, std::size_t c) const { return rho_[k][c]; }
  /// rho[k][labels_i] per node.
  std::vector<double> node_weights(std::size_t k, std::span<const int> labels) const;

 private:
  std::vector<std::vector<double>> rho_;
  std::size_t num_classes_ = 0;
};

struct PseudoGraph {
  Matrix features;
  Adjacency adjacency;
  std::vector<int> labels;
  NormalizedAdjacency norm_adj;
};

PseudoGraph make_pseudo_graph(Matrix features, std::vector<int> labels, std::size_t knn_k);

// Loss terms from precomputed logits. Each local_logits[k] pairs with row k of rho.
Var semantic_loss(std::span<const Var> local_logits, std::span<const int> labels, const ReliabilityWeights& rho);
Var divergence_loss(Var global_logits, std::span<const Var> local_logits, std::span<const int> labels,
                    const ReliabilityWeights& rho);

// Model-level evaluations on a pseudo graph (values only).
double semantic_loss(std::span<const GcnModel> locals, const ReliabilityWeights& rho, const PseudoGraph& pg);
double divergence_loss(const GcnModel& global, std::span<const GcnModel> locals, const ReliabilityWeights& rho,
                       const PseudoGraph& pg);

/// lambda1 * L_sem + lambda2 * L_div - L_diverg for the generator on a fixed pseudo
/// adjacency; features come from `x_hat`, every model is frozen.
Var generator_objective(Var x_hat, const GcnModel& global, std::span<const GcnModel> locals,
                        const ReliabilityWeights& rho, const PseudoGraph& pg, const DistillConfig& cfg);

/// Hook run on the aggregated model each round.
class PostProcessor {
 public:
  virtual ~PostProcessor() = default;
  virtual void refine(GcnModel& global, std::span<const GcnModel> locals, std::span<const ReliabilityVector> phi,
                      std::size_t round) = 0;
};

struct DistillTraceRow {
  std::size_t round = 0;
  std::size_t outer_iter = 0;
  double sem = 0.0;
  double div = 0.0;
  double diverg = 0.0;
};

class FedTadRefiner final : public PostProcessor {
 public:
  FedTadRefiner(DistillConfig cfg, std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed,
                bool allow_zero_iters = false);

  /// Alternating generator / global-model updates; the generator and its
  /// optimizer carry over to the next call. Throws NumericError with the
  /// round, iteration and loss terms if a loss stops being finite.
  void refine(GcnModel& global, std::span<const GcnModel> locals, std::span<const ReliabilityVector> phi,
              std::size_t round) override;

  const std::vector<DistillTraceRow>& trace() const noexcept { return trace_; }
  GeneratorModel& generator() noexcept { return generator_; }
  const DistillConfig& config() const noexcept { return cfg_; }

 private:
  DistillConfig cfg_;
  std::size_t num_classes_;
  std::uint64_t seed_;
  GeneratorModel generator_;
  OptimizerState generator_opt_;
  std::vector<DistillTraceRow> trace_;
};

void write_distill_trace(std::span<const DistillTraceRow> rows, const std::filesystem::path& path);

}  // namespace fedtad
