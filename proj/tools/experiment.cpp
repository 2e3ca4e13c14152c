#include "experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "fedtad/errors.hpp"
#include "fedtad/models.hpp"
#include "fedtad/reliability.hpp"

namespace fedtad::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

bool is_count(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

/// Reads one JSON object, remembering which keys were consumed so leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object())
      throw ConfigError(prefix_.empty() ? "config must be a JSON object" : "config key '" + prefix_ + "' must be an object");
  }

  // null counts as absent so an echoed config loads back unchanged
  bool has(const std::string& key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return !j_.at(key).is_null();
  }

  const json& sub(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void read(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!is_count(v)) throw type_error(key, "a non-negative integer");
    out = v.get<std::size_t>();
  }
  void read(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw type_error(key, "a number");
    out = v.get<double>();
  }
  void read(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw type_error(key, "a boolean");
    out = v.get<bool>();
  }
  void read(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw type_error(key, "a string");
    out = v.get<std::string>();
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + path(key) + "'");
  }

 private:
  ConfigError type_error(const std::string& key, const char* expected) const {
    return ConfigError("config key '" + path(key) + "' must be " + expected);
  }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

SbmSpec parse_sbm(const json& j) {
  ObjectReader r(j, "sbm");
  SbmSpec s;
  if (!r.has("nodes_per_class")) throw ConfigError("config key 'sbm.nodes_per_class' is required");
  const json& counts = r.sub("nodes_per_class");
  if (!counts.is_array()) throw ConfigError("config key 'sbm.nodes_per_class' must be an array");
  for (const auto& c : counts) {
    if (!is_count(c)) throw ConfigError("config key 'sbm.nodes_per_class' must hold non-negative integers");
    s.nodes_per_class.push_back(c.get<std::size_t>());
  }
  r.read("intra_prob", s.intra_prob);
  r.read("inter_prob", s.inter_prob);
  r.read("feature_dim", s.feature_dim);
  r.read("class_center_separation", s.class_center_separation);
  r.read("noise_std", s.noise_std);
  std::size_t seed = s.seed;
  r.read("seed", seed);
  s.seed = seed;
  r.finish();
  return s;
}

DistillConfig parse_distill(const json& j) {
  ObjectReader r(j, "distill");
  DistillConfig d;
  r.read("lambda_sem", d.lambda_sem);
  r.read("lambda_div", d.lambda_div);
  r.read("outer_iters", d.outer_iters);
  r.read("generator_steps", d.generator_steps);
  r.read("distill_steps", d.distill_steps);
  r.read("num_pseudo_nodes", d.num_pseudo_nodes);
  r.read("knn_k", d.knn_k);
  r.read("generator_lr", d.generator_lr);
  r.read("distill_lr", d.distill_lr);
  r.read("noise_dim", d.noise_dim);
  r.read("generator_hidden", d.generator_hidden);
  r.finish();
  return d;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.has_value() == sbm.has_value()) throw ConfigError("config needs exactly one of 'dataset' or 'sbm'");
  if (sbm) sbm->validate();
  if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
  const double total = split.train + split.val + split.test;
  if (split.train < 0 || split.val < 0 || split.test < 0 || std::abs(total - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  fed.validate();
}

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir) {
  ObjectReader r(j, "");
  ExperimentConfig cfg;
  std::string path;
  if (r.has("dataset")) {
    r.read("dataset", path);
    cfg.dataset = resolve(base_dir, path);
  }
  if (r.has("sbm")) cfg.sbm = parse_sbm(r.sub("sbm"));
  r.read("normalize_features", cfg.normalize_features);
  r.read("num_clients", cfg.num_clients);
  if (r.has("partition_seed")) {
    std::size_t s = 0;
    r.read("partition_seed", s);
    cfg.partition_seed = s;
  }
  if (r.has("partition_file")) {
    r.read("partition_file", path);
    cfg.partition_file = resolve(base_dir, path);
  }
  if (r.has("split")) {
    ObjectReader s(r.sub("split"), "split");
    s.read("train", cfg.split.train);
    s.read("val", cfg.split.val);
    s.read("test", cfg.split.test);
    s.finish();
  }
  FedConfig& f = cfg.fed;
  r.read("rounds", f.rounds);
  r.read("local_epochs", f.local_epochs);
  r.read("fraction", f.fraction);
  std::size_t seed = f.seed;
  r.read("seed", seed);
  f.seed = seed;
  r.read("hidden_dim", f.hidden_dim);
  r.read("dropout", f.dropout);
  r.read("optimizer", f.optimizer);
  r.read("learning_rate", f.learning_rate);
  r.read("weight_decay", f.weight_decay);
  r.read("aggregator", f.aggregator);
  r.read("post_processor", f.post_processor);
  r.read("walk_length", f.walk_length);
  r.read("reliability_noise", f.reliability_noise);
  r.read("workers", f.workers);
  if (r.has("distill")) f.distill = parse_distill(r.sub("distill"));
  if (r.has("out")) {
    r.read("out", path);
    cfg.out = resolve(base_dir, path);
  } else {
    cfg.out = base_dir / cfg.out;
  }
  r.read("distill_trace", cfg.distill_trace);
  r.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& cfg) {
  const FedConfig& f = cfg.fed;
  const DistillConfig& d = f.distill;
  json j;
  j["dataset"] = cfg.dataset ? json(cfg.dataset->string()) : json(nullptr);
  if (cfg.sbm) {
    const SbmSpec& s = *cfg.sbm;
    j["sbm"] = {{"nodes_per_class", s.nodes_per_class}, {"intra_prob", s.intra_prob},
                {"inter_prob", s.inter_prob},           {"feature_dim", s.feature_dim},
                {"class_center_separation", s.class_center_separation},
                {"noise_std", s.noise_std},             {"seed", s.seed}};
  } else {
    j["sbm"] = nullptr;
  }
  j["normalize_features"] = cfg.normalize_features;
  j["num_clients"] = cfg.num_clients;
  j["partition_seed"] = cfg.resolved_partition_seed();
  j["partition_file"] = cfg.partition_file ? json(cfg.partition_file->string()) : json(nullptr);
  j["split"] = {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}};
  j["rounds"] = f.rounds;
  j["local_epochs"] = f.local_epochs;
  j["fraction"] = f.fraction;
  j["seed"] = f.seed;
  j["hidden_dim"] = f.hidden_dim;
  j["dropout"] = f.dropout;
  j["optimizer"] = f.optimizer;
  j["learning_rate"] = f.learning_rate;
  j["weight_decay"] = f.weight_decay;
  j["aggregator"] = f.aggregator;
  j["post_processor"] = f.post_processor;
  j["walk_length"] = f.walk_length;
  j["reliability_noise"] = f.reliability_noise;
  j["workers"] = f.workers;
  j["distill"] = {{"lambda_sem", d.lambda_sem},
                  {"lambda_div", d.lambda_div},
                  {"outer_iters", d.outer_iters},
                  {"generator_steps", d.generator_steps},
                  {"distill_steps", d.distill_steps},
                  {"num_pseudo_nodes", d.num_pseudo_nodes},
                  {"knn_k", d.knn_k},
                  {"generator_lr", d.generator_lr},
                  {"distill_lr", d.distill_lr},
                  {"noise_dim", d.noise_dim},
                  {"generator_hidden", d.generator_hidden}};
  j["out"] = cfg.out.string();
  j["distill_trace"] = cfg.distill_trace;
  return j;
}

DatasetBundle load_experiment_graph(const ExperimentConfig& cfg) {
  DatasetBundle bundle = cfg.dataset ? load_dataset(*cfg.dataset) : generate_sbm(*cfg.sbm);
  if (cfg.normalize_features) {
    const Graph& g = bundle.graph;
    const auto edges = g.edge_list();
    bundle.graph = build_graph(edges, row_normalize(g.features()), std::vector<int>(g.labels().begin(), g.labels().end()),
                               g.num_classes());
  }
  return bundle;
}

Partition make_partition(const Graph& g, std::size_t num_clients, std::uint64_t seed) {
  if (num_clients == 1) return Partition{1, std::vector<std::uint32_t>(g.num_nodes(), 0)};
  const LouvainResult communities = louvain(g, seed);
  spdlog::debug("louvain: {} communities, modularity {:.4f}", communities.num_communities,
                communities.level_modularity.back());
  return assign_communities(communities.communities, g.adjacency(), num_clients, seed);
}

json analyze_shards(const std::vector<ClientShard>& shards, std::size_t walk_length) {
  json clients = json::array();
  for (const auto& s : shards) {
    const Graph& g = s.graph;
    const auto num_classes = static_cast<std::size_t>(g.num_classes());
    std::vector<std::size_t> hist(num_classes, 0);
    for (int y : g.labels())
      if (y != kUnlabeled) ++hist[static_cast<std::size_t>(y)];
    json homophily = json::array();
    for (std::size_t c = 0; c < num_classes; ++c) homophily.push_back(optional_json(class_homophily(g, static_cast<int>(c))));
    clients.push_back({{"client", s.client_id},
                       {"num_nodes", g.num_nodes()},
                       {"num_edges", g.num_edges()},
                       {"label_histogram", hist},
                       {"homophily", homophily},
                       {"reliability", knowledge_reliability(s, walk_length).phi}});
  }
  return {{"walk_length", walk_length}, {"clients", clients}};
}

json summarize_shards(const std::vector<ClientShard>& shards) {
  json out = json::array();
  std::size_t total = 0;
  for (const auto& s : shards) {
    total += s.graph.num_nodes();
    out.push_back({{"client", s.client_id},
                   {"num_nodes", s.graph.num_nodes()},
                   {"num_edges", s.graph.num_edges()},
                   {"train", s.train.size()},
                   {"val", s.val.size()},
                   {"test", s.test.size()}});
  }
  return {{"num_clients", shards.size()}, {"total_nodes", total}, {"shards", out}};
}

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const DatasetBundle bundle = load_experiment_graph(cfg);
  const Graph& g = bundle.graph;
  spdlog::info("dataset {}: {} nodes, {} edges, {} features, {} classes", bundle.name, g.num_nodes(), g.num_edges(),
               g.feature_dim(), g.num_classes());

  const Partition partition = cfg.partition_file ? read_partition(*cfg.partition_file)
                                                 : make_partition(g, cfg.num_clients, cfg.resolved_partition_seed());
  if (partition.assignments.size() != g.num_nodes())
    throw PartitionError("partition covers " + std::to_string(partition.assignments.size()) + " nodes, graph has " +
                         std::to_string(g.num_nodes()));
  if (partition.num_clients != cfg.num_clients)
    throw ConfigError("partition has " + std::to_string(partition.num_clients) + " clients, num_clients is " +
                      std::to_string(cfg.num_clients));
  const auto shards = induce_shards(g, partition, cfg.split, cfg.resolved_partition_seed());

  fs::create_directories(cfg.out);
  write_partition(partition, cfg.out / "partition.json");

  RunOutcome outcome;
  outcome.result = run_federation(shards, cfg.fed, [&](const RoundRecord& r) {
    spdlog::info("round {:>3}  test_acc {:.4f}  local_val {:.4f}  ({:.2f}s)", r.round, r.global_test_acc,
                 r.mean_local_val_acc, r.seconds);
  });
  const FederationResult& res = outcome.result;

  write_metrics_csv(res.rounds, cfg.out / "metrics.csv");
  write_checkpoint(res.final_weights, cfg.out / "checkpoint.json");
  if (cfg.distill_trace) write_distill_trace(res.distill_trace, cfg.out / "distill_trace.csv");

  json rel = json::array();
  for (std::size_t k = 0; k < res.reliability.size(); ++k) rel.push_back({{"client", k}, {"phi", res.reliability[k].phi}});
  write_json(rel, cfg.out / "reliability.json");

  std::size_t best = 0;
  for (std::size_t i = 1; i < res.rounds.size(); ++i)
    if (res.rounds[i].global_test_acc > res.rounds[best].global_test_acc) best = i;
  outcome.summary = {{"dataset", bundle.name},
                     {"final_test_acc", res.rounds.back().global_test_acc},
                     {"best_test_acc", res.rounds[best].global_test_acc},
                     {"best_round", res.rounds[best].round},
                     {"rounds", res.rounds.size()},
                     {"shards", summarize_shards(shards)},
                     {"config", to_json(cfg)}};
  write_json(outcome.summary, cfg.out / "summary.json");
  return outcome;
}

}  // namespace fedtad::cli
