#include "fedtad/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedtad/errors.hpp"
#include "fedtad/simd/kernels.hpp"

namespace fedtad {
namespace {

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(values));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Matrix::frobenius_norm() const {
  return std::sqrt(simd::kernels().dot(data_.data(), data_.data(), data_.size()));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto first = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[r]);
  const auto last = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[r + 1]);
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(c));
  if (it == last || *it != c) return 0.0;
  return values[static_cast<std::size_t>(it - col_indices.begin())];
}

Matrix SparseMatrix::to_dense() const {
  Matrix d(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = row_offsets[r]; k < row_offsets[r + 1]; ++k) d(r, col_indices[k]) = values[k];
  return d;
}

SparseMatrix SparseMatrix::transposed() const {
  SparseMatrix t;
  t.rows = cols;
  t.cols = rows;
  t.row_offsets.assign(cols + 1, 0);
  for (auto c : col_indices) ++t.row_offsets[c + 1];
  for (std::size_t i = 0; i < cols; ++i) t.row_offsets[i + 1] += t.row_offsets[i];
  t.col_indices.resize(nnz());
  t.values.resize(nnz());
  std::vector<std::size_t> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = row_offsets[r]; k < row_offsets[r + 1]; ++k) {
      const std::size_t dst = cursor[col_indices[k]]++;
      t.col_indices[dst] = static_cast<std::uint32_t>(r);
      t.values[dst] = values[k];
    }
  }
  return t;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  SparseMatrix s;
  s.rows = s.cols = n;
  s.row_offsets.resize(n + 1);
  s.col_indices.resize(n);
  s.values.assign(n, 1.0);
  for (std::size_t i = 0; i <= n; ++i) s.row_offsets[i] = i;
  for (std::size_t i = 0; i < n; ++i) s.col_indices[i] = static_cast<std::uint32_t>(i);
  return s;
}

namespace linalg {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
  const auto& k = simd::kernels();
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      if (ai[p] != 0.0) k.axpy(ai[p], b.row(p).data(), ci, n);
    }
  }
  return c;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b) + " into " + shape_str(c));
  const auto& k = simd::kernels();
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    const double* bi = b.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      if (ai[p] != 0.0) k.axpy(ai[p], bi, c.row(p).data(), n);
    }
  }
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows())
    throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T into " + shape_str(c));
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    double* ci = c.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) ci[j] += k.dot(ai, b.row(j).data(), a.cols());
  }
}

Matrix spmm(const SparseMatrix& s, const Matrix& b) {
  if (s.cols != b.rows())
    throw ShapeError("spmm: sparse " + std::to_string(s.rows) + "x" + std::to_string(s.cols) + " * " + shape_str(b));
  const auto& k = simd::kernels();
  Matrix c(s.rows, b.cols());
  for (std::size_t r = 0; r < s.rows; ++r) {
    double* cr = c.row(r).data();
    for (std::size_t e = s.row_offsets[r]; e < s.row_offsets[r + 1]; ++e)
      k.axpy(s.values[e], b.row(s.col_indices[e]).data(), cr, b.cols());
  }
  return c;
}

void spmm_tn_acc(const SparseMatrix& s, const Matrix& b, Matrix& c) {
  if (s.rows != b.rows() || c.rows() != s.cols || c.cols() != b.cols())
    throw ShapeError("spmm_tn: sparse " + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "^T * " +
                     shape_str(b) + " into " + shape_str(c));
  const auto& k = simd::kernels();
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* br = b.row(r).data();
    for (std::size_t e = s.row_offsets[r]; e < s.row_offsets[r + 1]; ++e)
      k.axpy(s.values[e], br, c.row(s.col_indices[e]).data(), b.cols());
  }
}

void axpy(double a, const Matrix& x, Matrix& y) {
  if (!x.same_shape(y)) throw ShapeError("axpy: " + shape_str(x) + " vs " + shape_str(y));
  simd::kernels().axpy(a, x.data(), y.data(), x.size());
}

}  // namespace linalg
}  // namespace fedtad
