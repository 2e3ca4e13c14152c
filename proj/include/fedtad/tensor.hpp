#pragma once

// Reverse-mode differentiation over 2-D double tensors.
//
// A Tape records ops in execution order; `backward` walks it in exact reverse.
// Leaves either borrow an external Tensor (gradients are accumulated into
// Tensor::grad when requires_grad is set) or hold a constant. Every forward op
// rejects non-finite results with NumericError and shape mismatches with
// ShapeError naming the op.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedtad/linalg.hpp"

namespace fedtad {

struct Tensor {
  Matrix value;
  Matrix grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Matrix v, bool track = false) : value(std::move(v)), requires_grad(track) {}

  bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad();
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Scalar value of a 1x1 var.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Borrows `t`; it must outlive the tape.
  Var input(Tensor& t);
  /// Borrows `m` as a constant; it must outlive the tape.
  Var input(const Matrix& m);
  Var constant(Matrix m);

  /// Reverse sweep from a 1x1 loss. Interior gradients are recomputed on every
  /// call; leaf tensors accumulate, so two calls yield twice the gradient.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Matrix& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::string_view op_name(std::size_t id) const { return nodes_[id].op; }

  // -- for op implementations --
  Var record(std::string_view op, Matrix value, std::initializer_list<Var> inputs, Backprop backprop);
  /// Upstream gradient of node `id` during backward.
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient accumulator of node `id`, allocated on first use.
  Matrix& grad_acc(std::size_t id);

 private:
  struct Node {
    std::string_view op;
    Matrix owned;
    const Matrix* borrowed = nullptr;
    Tensor* leaf = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Backprop backprop;
  };

  Var push(Node node);
  std::deque<Node> nodes_;
};

// ---- differentiable ops ----

Var matmul(Var a, Var b);
/// s * b; `s` is constant and must outlive the tape.
Var spmm(const SparseMatrix& s, Var b);
/// Same shape, or `b` a 1 x cols row vector broadcast over rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var row_softmax(Var a);
Var log_softmax(Var a);
/// 1x1 sum of all entries.
Var sum(Var a);
/// 1x1 mean of all entries.
Var mean(Var a);
/// Stacks a over b.
Var concat_rows(Var a, Var b);
/// Places a left of b.
Var concat_cols(Var a, Var b);
/// Inverted dropout; the keep mask is a pure function of (seed, flat index). p == 0 returns `a` itself.
Var dropout(Var a, double p, std::uint64_t seed);
/// Rows x rows matrix of cosine similarities, norms guarded by +1e-12.
Var cosine_similarity_matrix(Var a);
/// -sum_i w_i * logp[i, labels[i]] as 1x1. Rows with w_i == 0 are skipped.
Var weighted_nll(Var logp, std::span<const int> labels, std::span<const double> weights);
/// sum_i w_i * KL(softmax(p_i) || softmax(q_i)) as 1x1, q clamped at 1e-12 inside the log.
Var weighted_kl_rows(Var p_logits, Var q_logits, std::span<const double> weights);

/// Keep/drop decision used by `dropout`, exposed for tests.
bool dropout_keep(std::uint64_t seed, std::size_t index, double p);

}  // namespace fedtad
