#pragma once

// On-disk dataset directories and synthetic stochastic-block-model graphs.
//
// A dataset directory holds:
//   meta.json     {"num_nodes": int, "num_classes": int, "feature_dim": int, "name": string}
//   edges.csv     "u,v" per line, 0-indexed, each undirected edge once with u < v
//   features.csv  feature_dim comma-separated reals per line, node order
//   labels.csv    one integer per line, -1 = unlabeled
//   split.json    optional {"train": [...], "val": [...], "test": [...]}

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedtad/graph.hpp"

namespace fedtad {

struct DatasetSplit {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> val;
  std::vector<std::uint32_t> test;
};

struct DatasetBundle {
  Graph graph;
  std::string name;
  std::optional<DatasetSplit> split;
};

struct SbmSpec {
  std::vector<std::size_t> nodes_per_class;
  double intra_prob = 0.1;
  double inter_prob = 0.01;
  std::size_t feature_dim = 16;
  double class_center_separation = 1.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  int num_classes() const noexcept { return static_cast<int>(nodes_per_class.size()); }
  /// Throws ConfigError on probabilities outside [0,1], negative separation/noise or no classes.
  void validate() const;
};

DatasetBundle load_dataset(const std::filesystem::path& dir);

/// Canonical form: edges sorted with u < v, reals in shortest round-trip notation.
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);

/// Class c nodes get features separation * e_(c mod F) + N(0, noise_std^2); pairs are
/// linked with intra_prob inside a class and inter_prob across. Deterministic per seed.
DatasetBundle generate_sbm(const SbmSpec& spec);

/// Scales every nonzero row to unit L1 norm.
Matrix row_normalize(Matrix features);

}  // namespace fedtad
