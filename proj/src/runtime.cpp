#include "fedtad/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "fedtad/errors.hpp"
#include "fedtad/reliability.hpp"
#include "fedtad/seed.hpp"

namespace fedtad {
namespace {

constexpr std::uint64_t kInitSalt = 0x696e6974;
constexpr std::uint64_t kSelectSalt = 0x73656c;
constexpr std::uint64_t kDropoutSalt = 0x64726f70;
constexpr std::uint64_t kNoiseSalt = 0x6e6f6973;
constexpr std::uint64_t kServerSalt = 0x746164;

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The exception of the
/// lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(context + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(context + ": " + e.what());
  }
}

GcnModel model_with(const GcnModel& like, const ModelWeights& w) {
  GcnModel m = like;
  m.weights().assign_values(w);
  return m;
}

}  // namespace

void FedConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (optimizer != "adam" && optimizer != "sgd") throw ConfigError("optimizer must be \"adam\" or \"sgd\"");
  if (aggregator != "fedavg") throw ConfigError("aggregator must be \"fedavg\"");
  if (post_processor != "none" && post_processor != "fedtad")
    throw ConfigError("post_processor must be \"none\" or \"fedtad\"");
  if (walk_length < 1) throw ConfigError("walk_length must be >= 1");
  if (!(reliability_noise >= 0.0)) throw ConfigError("reliability_noise must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  distill.validate();
}

std::vector<std::size_t> select_clients(std::size_t num_clients, double fraction, std::size_t round,
                                        std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  const auto m = std::min<std::size_t>(
      num_clients, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(num_clients) - 1e-9)));
  if (m == 0) throw ConfigError("fraction * K selects no client");
  std::vector<std::size_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  if (m == num_clients) return ids;
  std::mt19937_64 rng(mix_seed(seed, kSelectSalt, round));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

GcnModel initial_model(std::size_t in_dim, std::size_t num_classes, const FedConfig& cfg) {
  return GcnModel(in_dim, cfg.hidden_dim, num_classes, cfg.dropout, mix_seed(cfg.seed, kInitSalt));
}

LocalTrainer::LocalTrainer(const ClientShard& shard, const FedConfig& cfg)
    : shard_(&shard),
      norm_adj_(gcn_normalize(shard.graph)),
      model_(shard.graph.feature_dim(), cfg.hidden_dim, static_cast<std::size_t>(shard.graph.num_classes()),
             cfg.dropout, 0),
      optimizer_(make_optimizer(cfg.optimizer, cfg.learning_rate, cfg.weight_decay)),
      seed_(cfg.seed) {}

std::uint64_t LocalTrainer::dropout_seed(std::uint64_t run_seed, std::size_t client_id, std::uint64_t step) {
  return mix_seed(run_seed, (kDropoutSalt << 32) | client_id, step);
}

ModelWeights LocalTrainer::update(const ModelWeights& global, std::size_t epochs, std::vector<double>* losses) {
  model_.weights().assign_values(global);
  auto params = model_.weights().parameters();
  const Graph& g = shard_->graph;
  try {
    for (std::size_t e = 0; e < epochs; ++e) {
      Tape tape;
      const Var logits = gcn_forward(tape, model_, norm_adj_, tape.input(g.features()), Mode::train,
                                     dropout_seed(seed_, shard_->client_id, steps_));
      const Var loss = masked_cross_entropy(logits, g.labels(), shard_->train);
      if (losses) losses->push_back(loss.item());
      tape.backward(loss);
      optimizer_->step(params);
      ++steps_;
    }
  } catch (...) {
    rethrow_with_context("client " + std::to_string(shard_->client_id));
  }
  return model_.weights();
}

ModelWeights local_update(const ClientShard& shard, const ModelWeights& global, std::size_t epochs,
                          const FedConfig& cfg) {
  LocalTrainer trainer(shard, cfg);
  return trainer.update(global, epochs);
}

ModelWeights fedavg_aggregate(std::span<const ModelWeights> weights, std::span<const std::size_t> node_counts) {
  if (weights.empty()) throw ShapeError("fedavg_aggregate: no client weights");
  if (weights.size() != node_counts.size()) throw ShapeError("fedavg_aggregate: weights and counts differ in length");
  const double total = std::accumulate(node_counts.begin(), node_counts.end(), 0.0,
                                       [](double a, std::size_t b) { return a + static_cast<double>(b); });
  if (!(total > 0.0)) throw ShapeError("fedavg_aggregate: zero total node count");

  ModelWeights out = weights.front();
  for (auto& e : out) {
    e.tensor.value.fill(0.0);
    e.tensor.grad = Matrix();
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const ModelWeights& w = weights[k];
    if (w.size() != out.size()) throw ShapeError("fedavg_aggregate: client " + std::to_string(k) + " tensor count");
    const double coef = static_cast<double>(node_counts[k]) / total;
    for (std::size_t t = 0; t < out.size(); ++t) {
      if (w[t].name != out[t].name || !w[t].tensor.value.same_shape(out[t].tensor.value))
        throw ShapeError("fedavg_aggregate: shape mismatch in tensor '" + out[t].name + "' from client " +
                         std::to_string(k));
      linalg::axpy(coef, w[t].tensor.value, out[t].tensor.value);
    }
  }
  return out;
}

Evaluation evaluate_global(const GcnModel& model, std::span<const ClientShard> shards,
                           std::span<const NormalizedAdjacency> norm_adjs) {
  Evaluation ev;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const auto& s = shards[k];
    if (s.test.empty()) continue;
    const Matrix logits = gcn_logits(model, norm_adjs[k], s.graph.features());
    ev.correct += count_correct(logits, s.graph.labels(), s.test);
    ev.total += s.test.size();
  }
  return ev;
}

FederationResult run_federation(std::span<const ClientShard> shards, const FedConfig& cfg,
                                const RoundCallback& on_round) {
  cfg.validate();
  if (shards.empty()) throw ConfigError("run_federation: no client shards");
  const std::size_t num_clients = shards.size();
  const std::size_t feature_dim = shards.front().graph.feature_dim();
  const auto num_classes = static_cast<std::size_t>(shards.front().graph.num_classes());
  for (const auto& s : shards)
    if (s.graph.feature_dim() != feature_dim || static_cast<std::size_t>(s.graph.num_classes()) != num_classes)
      throw ShapeError("run_federation: shards disagree on feature or class count");

  FederationResult result;
  // Client-side initialization: reliability is computed and uploaded once.
  result.reliability.resize(num_clients);
  parallel_for(num_clients, cfg.workers, [&](std::size_t k) {
    ReliabilityVector phi = knowledge_reliability(shards[k], cfg.walk_length);
    if (cfg.reliability_noise > 0.0) phi = perturb_reliability(phi, cfg.reliability_noise, mix_seed(cfg.seed, kNoiseSalt, k));
    result.reliability[k] = std::move(phi);
  });

  std::vector<LocalTrainer> trainers;
  std::vector<NormalizedAdjacency> norm_adjs;
  trainers.reserve(num_clients);
  for (const auto& s : shards) {
    trainers.emplace_back(s, cfg);
    norm_adjs.push_back(trainers.back().norm_adj());
  }

  GcnModel global = initial_model(feature_dim, num_classes, cfg);
  std::unique_ptr<FedTadRefiner> refiner;
  if (cfg.post_processor == "fedtad")
    refiner = std::make_unique<FedTadRefiner>(cfg.distill, feature_dim, num_classes, mix_seed(cfg.seed, kServerSalt));

  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    RoundRecord rec;
    rec.round = r;
    rec.selected = select_clients(num_clients, cfg.fraction, r, cfg.seed);
    const std::size_t m = rec.selected.size();

    std::vector<ModelWeights> local_weights(m);
    rec.local_val_acc.assign(m, std::numeric_limits<double>::quiet_NaN());
    try {
      parallel_for(m, cfg.workers, [&](std::size_t i) {
        const std::size_t k = rec.selected[i];
        local_weights[i] = trainers[k].update(global.weights(), cfg.local_epochs);
        const auto& s = shards[k];
        if (!s.val.empty()) {
          const Matrix logits = gcn_logits(model_with(global, local_weights[i]), norm_adjs[k], s.graph.features());
          rec.local_val_acc[i] =
              static_cast<double>(count_correct(logits, s.graph.labels(), s.val)) / static_cast<double>(s.val.size());
        }
      });

      std::vector<std::size_t> counts(m);
      for (std::size_t i = 0; i < m; ++i) counts[i] = shards[rec.selected[i]].graph.num_nodes();
      global.weights().assign_values(fedavg_aggregate(local_weights, counts));

      if (refiner) {
        std::vector<GcnModel> locals;
        std::vector<ReliabilityVector> phi;
        locals.reserve(m);
        for (std::size_t i = 0; i < m; ++i) {
          locals.push_back(model_with(global, local_weights[i]));
          phi.push_back(result.reliability[rec.selected[i]]);
        }
        refiner->refine(global, locals, phi, r);
      }
    } catch (...) {
      rethrow_with_context("round " + std::to_string(r));
    }

    const Evaluation ev = evaluate_global(global, shards, norm_adjs);
    rec.global_test_acc = ev.accuracy();
    rec.test_nodes_evaluated = ev.total;
    double sum = 0.0;
    std::size_t n = 0;
    for (double a : rec.local_val_acc)
      if (!std::isnan(a)) {
        sum += a;
        ++n;
      }
    rec.mean_local_val_acc = n == 0 ? 0.0 : sum / static_cast<double>(n);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_round) on_round(rec);
    result.rounds.push_back(std::move(rec));
  }

  result.final_weights = global.weights();
  if (refiner) result.distill_trace = refiner->trace();
  return result;
}

void write_metrics_csv(std::span<const RoundRecord> rounds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "round,global_test_acc,mean_local_val_acc,seconds\n";
  char buf[128];
  for (const auto& r : rounds) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.3f\n", r.round, r.global_test_acc, r.mean_local_val_acc,
                  r.seconds);
    out << buf;
  }
}

}  // namespace fedtad
