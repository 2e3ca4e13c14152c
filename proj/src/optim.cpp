#include "fedtad/optim.hpp"

#include <cmath>
#include <string>

#include "fedtad/errors.hpp"
#include "fedtad/simd/kernels.hpp"

namespace fedtad {
namespace {

void require_grads(std::span<Tensor* const> params, std::string_view who) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad())
      throw Error(std::string(who) + ": parameter " + std::to_string(i) + " has no gradient");
    if (!params[i]->grad.same_shape(params[i]->value))
      throw ShapeError(std::string(who) + ": gradient shape mismatch on parameter " + std::to_string(i));
  }
}

}  // namespace

void adam_step(std::span<Tensor* const> params, OptimizerState& state) {
  require_grads(params, "adam_step");
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->value.rows(), p->value.cols());
      state.second_moment.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const double lr = state.learning_rate;
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (!m.same_shape(p.value)) throw ShapeError("adam_step: moment shape mismatch on parameter " + std::to_string(i));
    double* w = p.value.data();
    const double* g = p.grad.data();
    const std::size_t n = p.value.size();
    if (state.weight_decay != 0.0) k.scal(1.0 - lr * state.weight_decay, w, n);
    k.axpby(1.0 - state.beta1, g, state.beta1, m.data(), n);
    double* vd = v.data();
    const double* md = m.data();
    for (std::size_t j = 0; j < n; ++j) {
      vd[j] = state.beta2 * vd[j] + (1.0 - state.beta2) * g[j] * g[j];
      w[j] -= lr * (md[j] / bc1) / (std::sqrt(vd[j] / bc2) + state.epsilon);
    }
    p.grad.fill(0.0);
  }
}

void sgd_step(std::span<Tensor* const> params, double learning_rate, double weight_decay) {
  require_grads(params, "sgd_step");
  const auto& k = simd::kernels();
  for (Tensor* p : params) {
    if (weight_decay != 0.0) k.scal(1.0 - learning_rate * weight_decay, p->value.data(), p->value.size());
    k.axpy(-learning_rate, p->grad.data(), p->value.data(), p->value.size());
    p->grad.fill(0.0);
  }
}

std::unique_ptr<Optimizer> make_optimizer(std::string_view name, double learning_rate, double weight_decay) {
  if (name == "adam") return std::make_unique<Adam>(learning_rate, weight_decay);
  if (name == "sgd") return std::make_unique<Sgd>(learning_rate, weight_decay);
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

}  // namespace fedtad
