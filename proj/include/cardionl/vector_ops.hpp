#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cardionl/errors.hpp"
#include "cardionl/parallel.hpp"

namespace cardionl {

using Vector = std::vector<double>;

inline void check_same_size(const Vector& a, const Vector& b, const char* op) {
  if (a.size() != b.size())
    throw ContractError(std::string(op) + ": size mismatch " + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()));
}

inline double dot(const Vector& a, const Vector& b) {
  check_same_size(a, b, "dot");
  return parallel_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

inline double nrm2(const Vector& a) { return std::sqrt(dot(a, a)); }

// y += alpha x
inline void axpy(double alpha, const Vector& x, Vector& y) {
  check_same_size(x, y, "axpy");
  parallel_for(x.size(), [&](std::size_t i) { y[i] += alpha * x[i]; });
}

// y = alpha x + beta y
inline void axpby(double alpha, const Vector& x, double beta, Vector& y) {
  check_same_size(x, y, "axpby");
  parallel_for(x.size(), [&](std::size_t i) { y[i] = alpha * x[i] + beta * y[i]; });
}

inline void scal(double alpha, Vector& x) {
  parallel_for(x.size(), [&](std::size_t i) { x[i] *= alpha; });
}

inline void fill(Vector& x, double value) {
  parallel_for(x.size(), [&](std::size_t i) { x[i] = value; });
}

inline double mean(const Vector& x) {
  if (x.empty()) return 0.0;
  return parallel_sum(x.size(), [&](std::size_t i) { return x[i]; }) /
         static_cast<double>(x.size());
}

inline void shift(Vector& x, double value) {
  parallel_for(x.size(), [&](std::size_t i) { x[i] += value; });
}

}  // namespace cardionl
