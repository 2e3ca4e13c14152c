#pragma once

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "fedtad/tensor.hpp"

namespace fedtad {

/// Adam moments and schedule. Moment shapes track the parameter list passed to `adam_step`.
struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam step with decoupled weight decay (w -= lr*wd*w before the adaptive update).
/// Every parameter must carry a gradient; gradients are zeroed afterwards.
void adam_step(std::span<Tensor* const> params, OptimizerState& state);

/// Plain gradient descent with the same decoupled decay; gradients zeroed afterwards.
void sgd_step(std::span<Tensor* const> params, double learning_rate, double weight_decay);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<Tensor* const> params) = 0;
  virtual std::unique_ptr<Optimizer> clone() const = 0;
};

class Adam final : public Optimizer {
 public:
  Adam(double learning_rate, double weight_decay) {
    state_.learning_rate = learning_rate;
    state_.weight_decay = weight_decay;
  }
  void step(std::span<Tensor* const> params) override { adam_step(params, state_); }
  std::unique_ptr<Optimizer> clone() const override { return std::make_unique<Adam>(*this); }
  const OptimizerState& state() const noexcept { return state_; }

 private:
  OptimizerState state_;
};

class Sgd final : public Optimizer {
 public:
  Sgd(double learning_rate, double weight_decay) : lr_(learning_rate), wd_(weight_decay) {}
  void step(std::span<Tensor* const> params) override { sgd_step(params, lr_, wd_); }
  std::unique_ptr<Optimizer> clone() const override { return std::make_unique<Sgd>(*this); }

 private:
  double lr_;
  double wd_;
};

/// "adam" or "sgd".
std::unique_ptr<Optimizer> make_optimizer(std::string_view name, double learning_rate, double weight_decay);

}  // namespace fedtad
