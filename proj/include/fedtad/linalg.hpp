#pragma once

// Dense row-major and CSR sparse matrices plus the handful of products the
// GCN and generator need. All arithmetic is double precision; the inner loops
// go through simd::kernels().

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedtad {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const noexcept;
  double frobenius_norm() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Compressed sparse rows. Column indices are sorted within each row.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<std::uint32_t> col_indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return col_indices.size(); }
  /// Entry (r, c), zero when not stored.
  double at(std::size_t r, std::size_t c) const;
  Matrix to_dense() const;
  SparseMatrix transposed() const;
  static SparseMatrix identity(std::size_t n);
};

namespace linalg {

/// a * b. Zero entries of `a` are skipped, which keeps sparse bag-of-words features cheap.
Matrix matmul(const Matrix& a, const Matrix& b);
/// c += a^T * b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);
/// c += a * b^T
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& c);
/// s * b
Matrix spmm(const SparseMatrix& s, const Matrix& b);
/// c += s^T * b
void spmm_tn_acc(const SparseMatrix& s, const Matrix& b, Matrix& c);
/// y += a * x over whole matrices of equal shape.
void axpy(double a, const Matrix& x, Matrix& y);

}  // namespace linalg
}  // namespace fedtad
