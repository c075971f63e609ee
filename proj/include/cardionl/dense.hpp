#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cardionl/csr.hpp"
#include "cardionl/errors.hpp"

namespace cardionl {

// Row-major dense matrix, used for coarse-level direct solves and test
// oracles on small problems.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

  static DenseMatrix from_csr(const CsrMatrix& s) {
    DenseMatrix d(s.rows, s.cols);
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t p = s.row_ptr[r]; p < s.row_ptr[r + 1]; ++p)
        d(r, static_cast<std::size_t>(s.col_idx[p])) = s.vals[p];
    return d;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return a_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a_[r * cols_ + c]; }

  Vector mult(const Vector& x) const {
    if (x.size() != cols_) throw ContractError("DenseMatrix::mult: size mismatch");
    Vector y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) s += a_[r * cols_ + c] * x[c];
      y[r] = s;
    }
    return y;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

// Cholesky factorization A = L L^T of an SPD matrix; solve() applies
// forward/back substitution.  Construction throws BreakdownError on a
// non-positive pivot.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(const DenseMatrix& a) : n_(a.rows()), l_(a.rows() * a.rows(), 0.0) {
    if (a.rows() != a.cols()) throw ContractError("CholeskyFactor: matrix not square");
    double scale = 0.0;
    for (std::size_t i = 0; i < n_; ++i) scale = std::max(scale, std::abs(a(i, i)));
    if (scale == 0.0) scale = 1.0;
    for (std::size_t j = 0; j < n_; ++j) {
      double d = a(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= l_[j * n_ + k] * l_[j * n_ + k];
      if (d <= 1e-14 * scale)
        throw BreakdownError("CholeskyFactor: non-positive pivot at index " + std::to_string(j));
      const double ljj = std::sqrt(d);
      l_[j * n_ + j] = ljj;
      for (std::size_t i = j + 1; i < n_; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l_[i * n_ + k] * l_[j * n_ + k];
        l_[i * n_ + j] = s / ljj;
      }
    }
  }

  Vector solve(const Vector& b) const {
    if (b.size() != n_) throw ContractError("CholeskyFactor::solve: size mismatch");
    Vector y(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= l_[i * n_ + k] * y[k];
      y[i] = s / l_[i * n_ + i];
    }
    for (std::size_t ii = n_; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n_; ++k) s -= l_[k * n_ + ii] * y[k];
      y[ii] = s / l_[ii * n_ + ii];
    }
    return y;
  }

 private:
  std::size_t n_;
  std::vector<double> l_;
};

}  // namespace cardionl
