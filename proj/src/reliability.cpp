#include "fedtad/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fedtad/errors.hpp"
#include "fedtad/simd/kernels.hpp"

namespace fedtad {

std::optional<double> class_homophily(const Graph& g, int c) {
  std::size_t both = 0, any = 0;
  for (const Edge& e : g.edge_list()) {
    const bool lu = g.label(e.u) == c;
    const bool lv = g.label(e.v) == c;
    if (lu || lv) ++any;
    if (lu && lv) ++both;
  }
  if (any == 0) return std::nullopt;
  return static_cast<double>(both) / static_cast<double>(any);
}

Matrix hybrid_embeddings(const Graph& g, std::size_t walk_length) {
  const Matrix topo = diffusion_diagonals(transition_matrix(g), walk_length);
  const std::size_t f = g.feature_dim();
  Matrix h(g.num_nodes(), f + walk_length);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    auto dst = h.row(i);
    const auto x = g.features().row(i);
    const auto t = topo.row(i);
    std::copy(x.begin(), x.end(), dst.begin());
    std::copy(t.begin(), t.end(), dst.begin() + static_cast<std::ptrdiff_t>(f));
  }
  return h;
}

ReliabilityVector knowledge_reliability(const ClientShard& shard, std::size_t walk_length) {
  const Graph& g = shard.graph;
  const Matrix h = hybrid_embeddings(g, walk_length);
  const auto& k = simd::kernels();
  const std::size_t w = h.cols();
  std::vector<double> norms(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) norms[i] = std::sqrt(k.dot(h.row(i).data(), h.row(i).data(), w));

  ReliabilityVector out;
  out.phi.assign(static_cast<std::size_t>(g.num_classes()), 0.0);
  for (auto i : shard.train) {
    const int c = g.label(i);
    if (c == kUnlabeled) throw Error("knowledge_reliability: training node " + std::to_string(i) + " is unlabeled");
    const auto nb = g.neighbors(i);
    if (nb.empty()) continue;
    double acc = 0.0;
    for (auto j : nb) {
      const double denom = norms[i] * norms[j];
      if (denom > 0.0) acc += k.dot(h.row(i).data(), h.row(j).data(), w) / denom;
    }
    out.phi[static_cast<std::size_t>(c)] += std::max(0.0, acc / static_cast<double>(nb.size()));
  }
  return out;
}

ReliabilityVector perturb_reliability(const ReliabilityVector& phi, double noise_level, std::uint64_t seed) {
  if (noise_level < 0.0) throw ConfigError("reliability noise level must be >= 0");
  ReliabilityVector out = phi;
  if (noise_level == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, 1.0);
  for (auto& v : out.phi) v = std::max(0.0, v * (1.0 + noise_level * eps(rng)));
  return out;
}

}  // namespace fedtad
