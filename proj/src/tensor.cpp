#include "fedtad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedtad/errors.hpp"
#include "fedtad/simd/kernels.hpp"

namespace fedtad {
namespace {

constexpr double kCosineEps = 1e-12;
constexpr double kKlClamp = 1e-12;

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_tape(std::string_view op, Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ShapeError(std::string(op) + ": inputs recorded on different tapes");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Matrix softmax_rows(const Matrix& a) {
  Matrix s(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto in = a.row(r);
    auto out = s.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (out[c] = std::exp(in[c] - mx));
    for (auto& v : out) v /= z;
  }
  return s;
}

Matrix log_softmax_rows(const Matrix& a) {
  Matrix s(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto in = a.row(r);
    auto out = s.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = in[c] - lse;
  }
  return s;
}

}  // namespace

void Tensor::zero_grad() {
  if (has_grad()) grad.fill(0.0);
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("item: expected 1x1, got " + shape_str(v));
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor& t) {
  Node n;
  n.op = "leaf";
  n.borrowed = &t.value;
  n.leaf = &t;
  n.needs_grad = t.requires_grad;
  return push(std::move(n));
}

Var Tape::input(const Matrix& m) {
  Node n;
  n.op = "input";
  n.borrowed = &m;
  return push(std::move(n));
}

Var Tape::constant(Matrix m) {
  Node n;
  n.op = "constant";
  n.owned = std::move(m);
  return push(std::move(n));
}

const Matrix& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.owned;
}

Var Tape::record(std::string_view op, Matrix value, std::initializer_list<Var> inputs, Backprop backprop) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite value in forward pass");
  Node n;
  n.op = op;
  n.owned = std::move(value);
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw ShapeError(std::string(op) + ": input recorded on a different tape");
    n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  }
  if (n.needs_grad) n.backprop = std::move(backprop);
  return push(std::move(n));
}

Matrix& Tape::grad_acc(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Matrix& v = value(id);
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ShapeError("backward: loss recorded on a different tape");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be 1x1, got " + shape_str(lv));
  for (Node& n : nodes_) n.grad = Matrix();
  if (!nodes_[loss.id()].needs_grad) return;
  grad_acc(loss.id())(0, 0) = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backprop) n.backprop(*this, i);
    if (n.leaf && n.leaf->requires_grad) {
      if (!n.leaf->has_grad()) n.leaf->grad = Matrix(n.grad.rows(), n.grad.cols());
      linalg::axpy(1.0, n.grad, n.leaf->grad);
    }
  }
}

// ---- ops ----

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: " + shape_str(av) + " * " + shape_str(bv));
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", linalg::matmul(av, bv), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) linalg::matmul_nt_acc(g, t.value(ib), t.grad_acc(ia));
    if (t.needs_grad(ib)) linalg::matmul_tn_acc(t.value(ia), g, t.grad_acc(ib));
  });
}

Var spmm(const SparseMatrix& s, Var b) {
  const Matrix& bv = b.value();
  if (s.cols != bv.rows())
    throw ShapeError("spmm: sparse " + std::to_string(s.rows) + "x" + std::to_string(s.cols) + " * " + shape_str(bv));
  const std::size_t ib = b.id();
  const SparseMatrix* sp = &s;
  return b.tape().record("spmm", linalg::spmm(s, bv), {b}, [sp, ib](Tape& t, std::size_t self) {
    linalg::spmm_tn_acc(*sp, t.grad(self), t.grad_acc(ib));
  });
}

Var add(Var a, Var b) {
  require_same_tape("add", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  if (av.same_shape(bv)) {
    Matrix out = av;
    linalg::axpy(1.0, bv, out);
    return a.tape().record("add", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
      if (t.needs_grad(ia)) linalg::axpy(1.0, t.grad(self), t.grad_acc(ia));
      if (t.needs_grad(ib)) linalg::axpy(1.0, t.grad(self), t.grad_acc(ib));
    });
  }
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw ShapeError("add: " + shape_str(av) + " + " + shape_str(bv));
  Matrix out = av;
  const auto& k = simd::kernels();
  for (std::size_t r = 0; r < out.rows(); ++r) k.axpy(1.0, bv.data(), out.row(r).data(), out.cols());
  return a.tape().record("add_row", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) linalg::axpy(1.0, g, t.grad_acc(ia));
    if (t.needs_grad(ib)) {
      Matrix& gb = t.grad_acc(ib);
      const auto& k = simd::kernels();
      for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(1.0, g.row(r).data(), gb.data(), g.cols());
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape("sub", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("sub: " + shape_str(av) + " - " + shape_str(bv));
  Matrix out = av;
  linalg::axpy(-1.0, bv, out);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    if (t.needs_grad(ia)) linalg::axpy(1.0, t.grad(self), t.grad_acc(ia));
    if (t.needs_grad(ib)) linalg::axpy(-1.0, t.grad(self), t.grad_acc(ib));
  });
}

Var mul(Var a, Var b) {
  require_same_tape("mul", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("mul: " + shape_str(av) + " * " + shape_str(bv));
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] * bv.data()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Matrix& ga = t.grad_acc(ia);
      const Matrix& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * bv.data()[i];
    }
    if (t.needs_grad(ib)) {
      Matrix& gb = t.grad_acc(ib);
      const Matrix& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * av.data()[i];
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  simd::kernels().scal(s, out.data(), out.size());
  const std::size_t ia = a.id();
  return a.tape().record("scale", std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    linalg::axpy(s, t.grad(self), t.grad_acc(ia));
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record("relu", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad_acc(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.data()[i] > 0.0) ga.data()[i] += g.data()[i];
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  const std::size_t ia = a.id();
  return a.tape().record("sigmoid", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& s = t.value(self);
    Matrix& ga = t.grad_acc(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * s.data()[i] * (1.0 - s.data()[i]);
  });
}

Var log(Var a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = std::log(v);
  const std::size_t ia = a.id();
  return a.tape().record("log", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad_acc(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] / x.data()[i];
  });
}

Var row_softmax(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record("row_softmax", softmax_rows(a.value()), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& s = t.value(self);
    Matrix& ga = t.grad_acc(ia);
    const auto& k = simd::kernels();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double inner = k.dot(g.row(r).data(), s.row(r).data(), g.cols());
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += s(r, c) * (g(r, c) - inner);
    }
  });
}

Var log_softmax(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record("log_softmax", log_softmax_rows(a.value()), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& ls = t.value(self);
    Matrix& ga = t.grad_acc(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double gsum = 0.0;
      for (double v : g.row(r)) gsum += v;
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) - std::exp(ls(r, c)) * gsum;
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Matrix(1, 1, s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    for (auto& v : t.grad_acc(ia).values()) v += g;
  });
}

Var mean(Var a) {
  const Matrix& av = a.value();
  if (av.empty()) throw ShapeError("mean: empty input");
  double s = 0.0;
  for (double v : av.values()) s += v;
  const double n = static_cast<double>(av.size());
  const std::size_t ia = a.id();
  return a.tape().record("mean", Matrix(1, 1, s / n), {a}, [ia, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0) / n;
    for (auto& v : t.grad_acc(ia).values()) v += g;
  });
}

Var concat_rows(Var a, Var b) {
  require_same_tape("concat_rows", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) throw ShapeError("concat_rows: " + shape_str(av) + " over " + shape_str(bv));
  std::vector<double> vals(av.values().begin(), av.values().end());
  vals.insert(vals.end(), bv.values().begin(), bv.values().end());
  const std::size_t ia = a.id(), ib = b.id();
  const std::size_t split = av.size();
  return a.tape().record("concat_rows", Matrix(av.rows() + bv.rows(), av.cols(), std::move(vals)), {a, b},
                         [ia, ib, split](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           const auto& k = simd::kernels();
                           if (t.needs_grad(ia)) k.axpy(1.0, g.data(), t.grad_acc(ia).data(), split);
                           if (t.needs_grad(ib)) k.axpy(1.0, g.data() + split, t.grad_acc(ib).data(), g.size() - split);
                         });
}

Var concat_cols(Var a, Var b) {
  require_same_tape("concat_cols", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: " + shape_str(av) + " beside " + shape_str(bv));
  Matrix out(av.rows(), av.cols() + bv.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), out.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(av.cols()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  const std::size_t left = av.cols();
  return a.tape().record("concat_cols", std::move(out), {a, b}, [ia, ib, left](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const auto& k = simd::kernels();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      if (t.needs_grad(ia)) k.axpy(1.0, g.row(r).data(), t.grad_acc(ia).row(r).data(), left);
      if (t.needs_grad(ib)) k.axpy(1.0, g.row(r).data() + left, t.grad_acc(ib).row(r).data(), g.cols() - left);
    }
  });
}

bool dropout_keep(std::uint64_t seed, std::size_t index, double p) {
  const double u = static_cast<double>(splitmix64(seed ^ splitmix64(index)) >> 11) * 0x1.0p-53;
  return u >= p;
}

Var dropout(Var a, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ShapeError("dropout: rate must be in [0, 1), got " + std::to_string(p));
  if (p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  Matrix out = a.value();
  double* d = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (d[i] != 0.0) d[i] = dropout_keep(seed, i, p) ? d[i] * keep_scale : 0.0;
  }
  const std::size_t ia = a.id();
  return a.tape().record("dropout", std::move(out), {a}, [ia, p, seed, keep_scale](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_acc(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (dropout_keep(seed, i, p)) ga.data()[i] += g.data()[i] * keep_scale;
  });
}

Var cosine_similarity_matrix(Var a) {
  const Matrix& x = a.value();
  const auto& k = simd::kernels();
  const std::size_t n = x.rows(), f = x.cols();
  std::vector<double> norms(n);
  Matrix unit = x;
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = std::sqrt(k.dot(x.row(i).data(), x.row(i).data(), f));
    k.scal(1.0 / (norms[i] + kCosineEps), unit.row(i).data(), f);
  }
  Matrix sim(n, n);
  linalg::matmul_nt_acc(unit, unit, sim);
  const std::size_t ia = a.id();
  return a.tape().record("cosine_similarity_matrix", std::move(sim), {a},
                         [ia, norms = std::move(norms), unit = std::move(unit)](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           const Matrix& x = t.value(ia);
                           const std::size_t n = g.rows(), f = x.cols();
                           // dU = (G + G^T) U
                           Matrix sym(n, n);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < n; ++j) sym(i, j) = g(i, j) + g(j, i);
                           const Matrix du = linalg::matmul(sym, unit);
                           Matrix& ga = t.grad_acc(ia);
                           const auto& k = simd::kernels();
                           for (std::size_t i = 0; i < n; ++i) {
                             const double denom = norms[i] + kCosineEps;
                             k.axpy(1.0 / denom, du.row(i).data(), ga.row(i).data(), f);
                             if (norms[i] > 0.0) {
                               const double proj = k.dot(x.row(i).data(), du.row(i).data(), f);
                               k.axpy(-proj / (denom * denom * norms[i]), x.row(i).data(), ga.row(i).data(), f);
                             }
                           }
                         });
}

Var weighted_nll(Var logp, std::span<const int> labels, std::span<const double> weights) {
  const Matrix& lp = logp.value();
  if (labels.size() != lp.rows() || weights.size() != lp.rows())
    throw ShapeError("weighted_nll: " + shape_str(lp) + " with " + std::to_string(labels.size()) + " labels, " +
                     std::to_string(weights.size()) + " weights");
  double total = 0.0;
  for (std::size_t i = 0; i < lp.rows(); ++i) {
    if (weights[i] == 0.0) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= lp.cols())
      throw ShapeError("weighted_nll: label " + std::to_string(labels[i]) + " out of range at row " + std::to_string(i));
    total -= weights[i] * lp(i, static_cast<std::size_t>(labels[i]));
  }
  const std::size_t ia = logp.id();
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> w(weights.begin(), weights.end());
  return logp.tape().record("weighted_nll", Matrix(1, 1, total), {logp},
                            [ia, lab = std::move(lab), w = std::move(w)](Tape& t, std::size_t self) {
                              const double g = t.grad(self)(0, 0);
                              Matrix& ga = t.grad_acc(ia);
                              for (std::size_t i = 0; i < lab.size(); ++i)
                                if (w[i] != 0.0) ga(i, static_cast<std::size_t>(lab[i])) -= g * w[i];
                            });
}

Var weighted_kl_rows(Var p_logits, Var q_logits, std::span<const double> weights) {
  require_same_tape("weighted_kl_rows", p_logits, q_logits);
  const Matrix& a = p_logits.value();
  const Matrix& b = q_logits.value();
  if (!a.same_shape(b) || weights.size() != a.rows())
    throw ShapeError("weighted_kl_rows: " + shape_str(a) + " vs " + shape_str(b) + " with " +
                     std::to_string(weights.size()) + " weights");
  Matrix p = softmax_rows(a);
  Matrix logp = log_softmax_rows(a);
  Matrix q = softmax_rows(b);
  // f = log p - log max(q, eps); log q taken from log_softmax so equal rows cancel exactly
  Matrix f = log_softmax_rows(b);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t c = 0; c < a.cols(); ++c)
      f(i, c) = logp(i, c) - (q(i, c) >= kKlClamp ? f(i, c) : std::log(kKlClamp));
  std::vector<double> row_kl(a.rows(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double kl = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (p(i, c) > 0.0) kl += p(i, c) * f(i, c);
    }
    row_kl[i] = kl;
    total += weights[i] * kl;
  }
  const std::size_t ia = p_logits.id(), ib = q_logits.id();
  std::vector<double> w(weights.begin(), weights.end());
  return p_logits.tape().record(
      "weighted_kl_rows", Matrix(1, 1, total), {p_logits, q_logits},
      [ia, ib, w = std::move(w), p = std::move(p), f = std::move(f), q = std::move(q),
       row_kl = std::move(row_kl)](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        const std::size_t n = p.rows(), c = p.cols();
        if (t.needs_grad(ia)) {
          // d/da_j = p_j (log p_j - log q_j - KL)
          Matrix& ga = t.grad_acc(ia);
          for (std::size_t i = 0; i < n; ++i) {
            if (w[i] == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) {
              ga(i, j) += g * w[i] * p(i, j) * (f(i, j) - row_kl[i]);
            }
          }
        }
        if (t.needs_grad(ib)) {
          // d/db_j = -p_j [q_j >= eps] + q_j * sum_c p_c [q_c >= eps]
          Matrix& gb = t.grad_acc(ib);
          for (std::size_t i = 0; i < n; ++i) {
            if (w[i] == 0.0) continue;
            double active_mass = 0.0;
            for (std::size_t j = 0; j < c; ++j)
              if (q(i, j) >= kKlClamp) active_mass += p(i, j);
            for (std::size_t j = 0; j < c; ++j) {
              const double own = q(i, j) >= kKlClamp ? p(i, j) : 0.0;
              gb(i, j) += g * w[i] * (q(i, j) * active_mass - own);
            }
          }
        }
      });
}

}  // namespace fedtad
