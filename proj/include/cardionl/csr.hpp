#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <tuple>
#include <vector>

#include "cardionl/errors.hpp"
#include "cardionl/vector_ops.hpp"

namespace cardionl {

// Compressed sparse row matrix.  Column indices are strictly increasing
// within each row; duplicate entries are merged at construction.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // size rows + 1
  std::vector<std::int32_t> col_idx;
  std::vector<double> vals;

  std::size_t nnz() const { return vals.size(); }

  void validate() const {
    if (row_ptr.size() != rows + 1 || row_ptr.front() != 0 || row_ptr.back() != nnz() ||
        col_idx.size() != vals.size())
      throw ContractError("CsrMatrix: inconsistent structure arrays");
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t p = row_ptr[r]; p + 1 < row_ptr[r + 1]; ++p)
        if (col_idx[p] >= col_idx[p + 1])
          throw ContractError("CsrMatrix: column indices not strictly increasing in row " +
                              std::to_string(r));
      if (row_ptr[r + 1] > row_ptr[r] &&
          (col_idx[row_ptr[r]] < 0 ||
           static_cast<std::size_t>(col_idx[row_ptr[r + 1] - 1]) >= cols))
        throw ContractError("CsrMatrix: column index out of range in row " + std::to_string(r));
    }
  }

  // y = A x (raw-pointer form; x must have cols entries, y rows entries)
  void mult_ptr(const double* x, double* y) const {
    parallel_for(rows, [&](std::size_t r) {
      double s = 0.0;
      for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
        s += vals[p] * x[static_cast<std::size_t>(col_idx[p])];
      y[r] = s;
    });
  }

  // y = A x
  void mult(const Vector& x, Vector& y) const {
    if (x.size() != cols) throw ContractError("CsrMatrix::mult: x has wrong size");
    y.resize(rows);
    mult_ptr(x.data(), y.data());
  }

  Vector mult(const Vector& x) const {
    Vector y;
    mult(x, y);
    return y;
  }

  Vector diagonal() const {
    Vector d(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
        if (static_cast<std::size_t>(col_idx[p]) == r) d[r] = vals[p];
    return d;
  }

  double value_at(std::size_t r, std::size_t c) const {
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
      if (static_cast<std::size_t>(col_idx[p]) == c) return vals[p];
    return 0.0;
  }
};

struct Triplet {
  std::size_t row, col;
  double value;
};

// Builds CSR from unordered triplets; duplicates are summed.
inline CsrMatrix csr_from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<Triplet> trips) {
  for (const Triplet& t : trips)
    if (t.row >= rows || t.col >= cols)
      throw ContractError("csr_from_triplets: entry outside matrix bounds");
  std::sort(trips.begin(), trips.end(), [](const Triplet& a, const Triplet& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  CsrMatrix a;
  a.rows = rows;
  a.cols = cols;
  a.row_ptr.assign(rows + 1, 0);
  for (std::size_t i = 0; i < trips.size();) {
    std::size_t j = i + 1;
    double s = trips[i].value;
    while (j < trips.size() && trips[j].row == trips[i].row && trips[j].col == trips[i].col)
      s += trips[j++].value;
    a.col_idx.push_back(static_cast<std::int32_t>(trips[i].col));
    a.vals.push_back(s);
    ++a.row_ptr[trips[i].row + 1];
    i = j;
  }
  for (std::size_t r = 0; r < rows; ++r) a.row_ptr[r + 1] += a.row_ptr[r];
  return a;
}

inline CsrMatrix csr_transpose(const CsrMatrix& a) {
  CsrMatrix t;
  t.rows = a.cols;
  t.cols = a.rows;
  t.row_ptr.assign(t.rows + 1, 0);
  for (std::int32_t c : a.col_idx) ++t.row_ptr[static_cast<std::size_t>(c) + 1];
  for (std::size_t r = 0; r < t.rows; ++r) t.row_ptr[r + 1] += t.row_ptr[r];
  t.col_idx.resize(a.nnz());
  t.vals.resize(a.nnz());
  std::vector<std::size_t> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
      const std::size_t tr = static_cast<std::size_t>(a.col_idx[p]);
      const std::size_t q = next[tr]++;
      t.col_idx[q] = static_cast<std::int32_t>(r);
      t.vals[q] = a.vals[p];
    }
  }
  return t;
}

// C = A B, Gustavson row-merge with a dense accumulator over B's columns.
inline CsrMatrix csr_matmul(const CsrMatrix& a, const CsrMatrix& b) {
  if (a.cols != b.rows) throw ContractError("csr_matmul: inner dimensions differ");
  CsrMatrix c;
  c.rows = a.rows;
  c.cols = b.cols;
  c.row_ptr.assign(a.rows + 1, 0);
  std::vector<double> acc(b.cols, 0.0);
  std::vector<std::int64_t> stamp(b.cols, -1);
  std::vector<std::int32_t> marked;
  for (std::size_t r = 0; r < a.rows; ++r) {
    marked.clear();
    for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
      const std::size_t k = static_cast<std::size_t>(a.col_idx[p]);
      const double av = a.vals[p];
      for (std::size_t q = b.row_ptr[k]; q < b.row_ptr[k + 1]; ++q) {
        const std::size_t j = static_cast<std::size_t>(b.col_idx[q]);
        if (stamp[j] != static_cast<std::int64_t>(r)) {
          stamp[j] = static_cast<std::int64_t>(r);
          marked.push_back(static_cast<std::int32_t>(j));
          acc[j] = av * b.vals[q];
        } else {
          acc[j] += av * b.vals[q];
        }
      }
    }
    std::sort(marked.begin(), marked.end());
    for (std::int32_t j : marked) {
      c.col_idx.push_back(j);
      c.vals.push_back(acc[static_cast<std::size_t>(j)]);
    }
    c.row_ptr[r + 1] = c.vals.size();
  }
  return c;
}

}  // namespace cardionl
