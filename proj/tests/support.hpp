#pragma once

// Independent oracles and fixtures shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "fedtad/graph.hpp"
#include "fedtad/tensor.hpp"

namespace fedtad::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = d(rng);
  return m;
}

/// Erdos-Renyi graph with uniformly random labels (some unlabeled when `unlabeled_prob` > 0).
inline Graph random_graph(std::size_t n, double edge_prob, int num_classes, std::size_t feature_dim,
                          std::uint64_t seed, double unlabeled_prob = 0.0) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(edge_prob), unlabeled(unlabeled_prob);
  std::uniform_int_distribution<int> label(0, num_classes - 1);
  std::vector<Edge> edges;
  for (std::uint32_t u = 0; u < n; ++u)
    for (std::uint32_t v = u + 1; v < n; ++v)
      if (edge(rng)) edges.push_back({u, v});
  std::vector<int> labels(n);
  for (auto& y : labels) y = unlabeled(rng) ? kUnlabeled : label(rng);
  return build_graph(edges, random_matrix(n, feature_dim, rng), std::move(labels), num_classes);
}

/// Dense A D^-1 straight from the edge list.
inline Matrix dense_transition(const Graph& g) {
  const std::size_t n = g.num_nodes();
  Matrix a(n, n);
  for (const auto& e : g.edge_list()) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[j] += a(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (deg[j] > 0) a(i, j) /= deg[j];
  return a;
}

inline Matrix dense_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

/// diag(T^1..T^p) by explicit dense matrix powers.
inline Matrix dense_power_diagonals(const Matrix& t, std::size_t p) {
  Matrix out(t.rows(), p);
  Matrix power = t;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < t.rows(); ++i) out(i, j) = power(i, i);
    power = dense_product(power, t);
  }
  return out;
}

/// Eq. 2 by enumerating every stored edge once.
inline std::optional<double> enumerate_homophily(const Graph& g, int c) {
  std::size_t both = 0, any = 0;
  for (const auto& e : g.edge_list()) {
    const bool a = g.label(e.u) == c, b = g.label(e.v) == c;
    if (a || b) ++any;
    if (a && b) ++both;
  }
  if (any == 0) return std::nullopt;
  return static_cast<double>(both) / static_cast<double>(any);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

/// Loss builder for gradient checks: receives one Var per input, returns a 1x1 Var.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Max over all input entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-3),
/// numeric from central differences with step `eps`.
inline double gradcheck(const LossFn& f, std::vector<Matrix> inputs, double eps = 1e-5) {
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (auto& m : inputs) leaves.emplace_back(m, true);
  {
    Tape tape;
    std::vector<Var> vars;
    for (auto& t : leaves) vars.push_back(tape.input(t));
    tape.backward(f(tape, vars));
  }
  auto eval = [&](const std::vector<Matrix>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& m : xs) vars.push_back(tape.input(m));
    return f(tape, vars).item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k].values()[i];
      inputs[k].values()[i] = orig + eps;
      const double up = eval(inputs);
      inputs[k].values()[i] = orig - eps;
      const double down = eval(inputs);
      inputs[k].values()[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = leaves[k].has_grad() ? leaves[k].grad.values()[i] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

/// Finite-difference check on tensors owned by a model. `loss` builds the scalar on
/// a fresh tape from the current parameter values.
inline double gradcheck_params(const std::function<Var(Tape&)>& loss, const std::vector<Tensor*>& params,
                               double eps = 1e-5) {
  for (auto* t : params) t->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<Matrix> analytic;
  for (auto* t : params) analytic.push_back(t->has_grad() ? t->grad : Matrix(t->value.rows(), t->value.cols()));
  auto eval = [&] {
    Tape tape;
    return loss(tape).item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k]->value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = eval();
      values[i] = orig - eps;
      const double down = eval();
      values[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[k].values()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3}));
    }
  }
  for (auto* t : params) t->zero_grad();
  return worst;
}

}  // namespace fedtad::testing
