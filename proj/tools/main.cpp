// fedtad: partition graphs into clients, analyze their heterogeneity, run experiments.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "experiment.hpp"
#include "fedtad/errors.hpp"
#include "fedtad/simd/kernels.hpp"

namespace fs = std::filesystem;
using namespace fedtad;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("fedtad");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("FEDTAD_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

void emit(const nlohmann::json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out);
  if (!f) throw Error("cannot write " + out);
  f << j.dump(2) << "\n";
}

std::vector<ClientShard> shards_for(const Graph& g, std::size_t clients, const std::string& partition_file,
                                    std::uint64_t seed) {
  const Partition p = partition_file.empty() ? cli::make_partition(g, clients, seed) : read_partition(partition_file);
  return induce_shards(g, p, SplitRatios{}, seed);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Federated subgraph learning with topology-aware distillation"};
  app.require_subcommand(1);

  std::string dataset, out, config, partition_file;
  std::size_t clients = 5, walk_length = 5;
  std::uint64_t seed = 0;
  bool no_normalize = false, strip_edges = false;

  auto* partition = app.add_subcommand("partition", "Split a dataset into Louvain clients");
  partition->add_option("--dataset", dataset, "Dataset directory")->required();
  partition->add_option("--clients,-k", clients, "Number of clients")->check(CLI::PositiveNumber);
  partition->add_option("--seed", seed, "Random seed");
  partition->add_option("--out", out, "Output directory")->required();

  auto* analyze = app.add_subcommand("analyze", "Label, homophily and reliability report per client");
  auto* src = analyze->add_option_group("source");
  src->add_option("--dataset", dataset, "Dataset directory");
  src->add_option("--config", config, "Experiment config (dataset or sbm section)");
  src->require_option(1);
  analyze->add_option("--clients,-k", clients, "Number of clients")->check(CLI::PositiveNumber);
  analyze->add_option("--partition", partition_file, "partition.json to reuse");
  analyze->add_option("--seed", seed, "Random seed");
  analyze->add_option("--walk-length,-p", walk_length, "Random-walk length")->check(CLI::PositiveNumber);
  analyze->add_flag("--strip-edges", strip_edges, "Remove all client edges before analysis");
  analyze->add_flag("--raw-features", no_normalize, "Skip row normalization of features");
  analyze->add_option("--out", out, "Write the report here instead of stdout");

  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> workers;
  auto* run = app.add_subcommand("run", "Run a federated experiment");
  run->add_option("--config", config, "Experiment config JSON")->required();
  run->add_option("--seed", seed_override, "Override the config seed");
  run->add_option("--out", out, "Override the output directory");
  run->add_option("--workers", workers, "Parallel client updates")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  spdlog::debug("simd kernels: {}", simd::isa_name(simd::kernels().isa));

  try {
    if (*partition) {
      const DatasetBundle bundle = load_dataset(dataset);
      const Partition p = cli::make_partition(bundle.graph, clients, seed);
      const auto shards = induce_shards(bundle.graph, p, SplitRatios{}, seed);
      fs::create_directories(out);
      write_partition(p, fs::path(out) / "partition.json");
      const auto summary = cli::summarize_shards(shards);
      emit(summary, (fs::path(out) / "shards.json").string());
      for (const auto& s : summary["shards"])
        spdlog::info("client {}: {} nodes, {} edges", s["client"].get<std::size_t>(), s["num_nodes"].get<std::size_t>(),
                     s["num_edges"].get<std::size_t>());
      spdlog::info("{} clients, {} nodes total", shards.size(), summary["total_nodes"].get<std::size_t>());
    } else if (*analyze) {
      DatasetBundle bundle;
      if (!config.empty()) {
        cli::ExperimentConfig cfg = cli::load_experiment_config(config);
        if (no_normalize) cfg.normalize_features = false;
        bundle = cli::load_experiment_graph(cfg);
      } else {
        bundle = load_dataset(dataset);
      }
      auto shards = shards_for(bundle.graph, clients, partition_file, seed);
      if (strip_edges) shards = simulate_node_variation(std::move(shards));
      emit(cli::analyze_shards(shards, walk_length), out);
    } else if (*run) {
      cli::ExperimentConfig cfg = cli::load_experiment_config(config);
      if (seed_override) cfg.fed.seed = *seed_override;
      if (!out.empty()) cfg.out = out;
      if (workers) cfg.fed.workers = *workers;
      const auto outcome = cli::run_experiment(cfg);
      spdlog::info("final test accuracy {:.4f} (best {:.4f} at round {}), outputs in {}",
                   outcome.summary["final_test_acc"].get<double>(), outcome.summary["best_test_acc"].get<double>(),
                   outcome.summary["best_round"].get<std::size_t>(), cfg.out.string());
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
