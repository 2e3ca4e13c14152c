#include "fedtad/fedtad_server.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "fedtad/errors.hpp"
#include "fedtad/seed.hpp"

namespace fedtad {
namespace {

struct ObjectiveTerms {
  Var sem;
  Var div;
  Var diverg;
  Var total;
};

ObjectiveTerms objective_terms(Var x_hat, const GcnModel& global, std::span<const GcnModel> locals,
                               const ReliabilityWeights& rho, const PseudoGraph& pg, const DistillConfig& cfg) {
  Tape& tape = x_hat.tape();
  std::vector<Var> local_logits;
  local_logits.reserve(locals.size());
  for (const auto& m : locals) local_logits.push_back(gcn_forward(tape, m, pg.norm_adj, x_hat));
  const Var global_logits = gcn_forward(tape, global, pg.norm_adj, x_hat);
  ObjectiveTerms t;
  t.sem = semantic_loss(local_logits, pg.labels, rho);
  t.div = diversity_loss(x_hat);
  t.diverg = divergence_loss(global_logits, local_logits, pg.labels, rho);
  t.total = sub(add(scale(t.sem, cfg.lambda_sem), scale(t.div, cfg.lambda_div)), t.diverg);
  return t;
}

std::string describe(std::size_t round, std::size_t iter, const char* phase, double sem, double div, double diverg) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "round %zu, outer iteration %zu (%s): L_sem=%g L_div=%g L_diverg=%g", round, iter,
                phase, sem, div, diverg);
  return buf;
}

}  // namespace

void DistillConfig::validate(bool allow_zero_iters) const {
  if (!allow_zero_iters && outer_iters == 0) throw ConfigError("distill.outer_iters must be >= 1");
  if (generator_steps == 0) throw ConfigError("distill.generator_steps must be >= 1");
  if (distill_steps == 0) throw ConfigError("distill.distill_steps must be >= 1");
  if (knn_k == 0) throw ConfigError("distill.knn_k must be >= 1");
  if (noise_dim == 0 || generator_hidden == 0) throw ConfigError("distill: generator dimensions must be >= 1");
  if (!(lambda_sem >= 0.0) || !(lambda_div >= 0.0)) throw ConfigError("distill: lambdas must be >= 0");
  if (!(generator_lr >= 0.0) || !(distill_lr >= 0.0)) throw ConfigError("distill: learning rates must be >= 0");
}

ReliabilityWeights::ReliabilityWeights(std::span<const ReliabilityVector> phi) {
  if (phi.empty()) return;
  num_classes_ = phi.front().phi.size();
  std::vector<double> total(num_classes_, 0.0);
  for (const auto& p : phi) {
    if (p.phi.size() != num_classes_) throw ShapeError("reliability vectors disagree on class count");
    for (std::size_t c = 0; c < num_classes_; ++c) total[c] += p.phi[c];
  }
  rho_.assign(phi.size(), std::vector<double>(num_classes_, 0.0));
  for (std::size_t k = 0; k < phi.size(); ++k)
    for (std::size_t c = 0; c < num_classes_; ++c)
      if (total[c] > 0.0) rho_[k][c] = phi[k].phi[c] / total[c];
}

std::vector<double> ReliabilityWeights::node_weights(std::size_t k, std::span<const int> labels) const {
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes_)
      throw ShapeError("pseudo label out of range");
    w[i] = rho_[k][static_cast<std::size_t>(labels[i])];
  }
  return w;
}

PseudoGraph make_pseudo_graph(Matrix features, std::vector<int> labels, std::size_t knn_k) {
  if (features.rows() != labels.size()) throw ShapeError("pseudo graph: feature rows != label count");
  PseudoGraph pg;
  pg.adjacency = knn_adjacency(features, knn_k);
  pg.norm_adj = gcn_normalize(pg.adjacency);
  pg.features = std::move(features);
  pg.labels = std::move(labels);
  return pg;
}

Var semantic_loss(std::span<const Var> local_logits, std::span<const int> labels, const ReliabilityWeights& rho) {
  if (local_logits.empty()) throw ShapeError("semantic_loss: no local models");
  if (local_logits.size() != rho.num_clients()) throw ShapeError("semantic_loss: reliability rows != local models");
  Var total;
  for (std::size_t k = 0; k < local_logits.size(); ++k) {
    const auto w = rho.node_weights(k, labels);
    const Var term = weighted_nll(log_softmax(local_logits[k]), labels, w);
    total = k == 0 ? term : add(total, term);
  }
  return total;
}

Var divergence_loss(Var global_logits, std::span<const Var> local_logits, std::span<const int> labels,
                    const ReliabilityWeights& rho) {
  if (local_logits.empty()) throw ShapeError("divergence_loss: no local models");
  if (local_logits.size() != rho.num_clients()) throw ShapeError("divergence_loss: reliability rows != local models");
  Var total;
  for (std::size_t k = 0; k < local_logits.size(); ++k) {
    const auto w = rho.node_weights(k, labels);
    const Var term = weighted_kl_rows(global_logits, local_logits[k], w);
    total = k == 0 ? term : add(total, term);
  }
  return total;
}

double semantic_loss(std::span<const GcnModel> locals, const ReliabilityWeights& rho, const PseudoGraph& pg) {
  Tape tape;
  const Var x = tape.input(pg.features);
  std::vector<Var> logits;
  for (const auto& m : locals) logits.push_back(gcn_forward(tape, m, pg.norm_adj, x));
  return semantic_loss(logits, pg.labels, rho).item();
}

double divergence_loss(const GcnModel& global, std::span<const GcnModel> locals, const ReliabilityWeights& rho,
                       const PseudoGraph& pg) {
  Tape tape;
  const Var x = tape.input(pg.features);
  std::vector<Var> logits;
  for (const auto& m : locals) logits.push_back(gcn_forward(tape, m, pg.norm_adj, x));
  return divergence_loss(gcn_forward(tape, global, pg.norm_adj, x), logits, pg.labels, rho).item();
}

Var generator_objective(Var x_hat, const GcnModel& global, std::span<const GcnModel> locals,
                        const ReliabilityWeights& rho, const PseudoGraph& pg, const DistillConfig& cfg) {
  return objective_terms(x_hat, global, locals, rho, pg, cfg).total;
}

FedTadRefiner::FedTadRefiner(DistillConfig cfg, std::size_t feature_dim, std::size_t num_classes,
                             std::uint64_t seed, bool allow_zero_iters)
    : cfg_(cfg),
      num_classes_(num_classes),
      seed_(seed),
      generator_(cfg.noise_dim, num_classes, cfg.generator_hidden, feature_dim, mix_seed(seed, 0x67656eu)) {
  cfg_.validate(allow_zero_iters);
  if (cfg_.knn_k >= cfg_.pseudo_nodes(num_classes))
    throw ConfigError("distill.knn_k must be smaller than the pseudo node count");
  generator_opt_.learning_rate = cfg_.generator_lr;
  generator_opt_.weight_decay = 0.0;
}

void FedTadRefiner::refine(GcnModel& global, std::span<const GcnModel> locals,
                           std::span<const ReliabilityVector> phi, std::size_t round) {
  if (locals.empty()) throw ShapeError("fedtad refine: no local models");
  if (phi.size() != locals.size()) throw ShapeError("fedtad refine: reliability list not aligned with locals");
  for (const auto& m : locals)
    if (!m.weights().same_architecture(global.weights()))
      throw ShapeError("fedtad refine: local model architecture differs from global");
  if (global.num_classes() != num_classes_) throw ShapeError("fedtad refine: class count mismatch");

  const ReliabilityWeights rho(phi);
  const std::size_t batch = cfg_.pseudo_nodes(num_classes_);
  auto gen_params = generator_.weights().parameters();
  auto global_params = global.weights().parameters();
  for (auto* t : global_params) t->requires_grad = true;

  OptimizerState distill_opt;
  distill_opt.learning_rate = cfg_.distill_lr;
  distill_opt.weight_decay = 0.0;

  for (std::size_t it = 0; it < cfg_.outer_iters; ++it) {
    const GeneratorInputs in = sample_generator_inputs(batch, num_classes_, cfg_.noise_dim, mix_seed(seed_, round, it));
    PseudoGraph pg;
    {
      Tape tape;
      pg = make_pseudo_graph(generator_.forward(tape, in.noise, in.labels).value(), in.labels, cfg_.knn_k);
    }

    DistillTraceRow row{round, it, 0.0, 0.0, 0.0};
    for (std::size_t g = 0; g < cfg_.generator_steps; ++g) {
      Tape tape;
      try {
        const Var x = generator_.forward(tape, in.noise, in.labels);
        const ObjectiveTerms t = objective_terms(x, global, locals, rho, pg, cfg_);
        row.sem = t.sem.item();
        row.div = t.div.item();
        row.diverg = t.diverg.item();
        if (!std::isfinite(t.total.item())) throw NumericError("non-finite generator objective");
        tape.backward(t.total);
      } catch (const NumericError& e) {
        throw NumericError(describe(round, it, "generator", row.sem, row.div, row.diverg) + ": " + e.what());
      }
      adam_step(gen_params, generator_opt_);
    }

    {
      Tape tape;
      pg.features = generator_.forward(tape, in.noise, in.labels).value();
    }
    std::vector<Matrix> local_logits;
    local_logits.reserve(locals.size());
    for (const auto& m : locals) local_logits.push_back(gcn_logits(m, pg.norm_adj, pg.features));

    for (std::size_t d = 0; d < cfg_.distill_steps; ++d) {
      Tape tape;
      try {
        const Var gl = gcn_forward(tape, global, pg.norm_adj, tape.input(pg.features), Mode::eval, 0);
        std::vector<Var> ll;
        for (const auto& m : local_logits) ll.push_back(tape.input(m));
        const Var loss = divergence_loss(gl, ll, pg.labels, rho);
        if (!std::isfinite(loss.item())) throw NumericError("non-finite distillation loss");
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError(describe(round, it, "distill", row.sem, row.div, row.diverg) + ": " + e.what());
      }
      adam_step(global_params, distill_opt);
    }
    trace_.push_back(row);
  }
}

void write_distill_trace(std::span<const DistillTraceRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "round,outer_iter,l_sem,l_div,l_diverg\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g\n", r.round, r.outer_iter, r.sem, r.div, r.diverg);
    out << buf;
  }
}

}  // namespace fedtad
