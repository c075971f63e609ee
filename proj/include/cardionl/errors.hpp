#pragma once

#include <stdexcept>
#include <string>

namespace cardionl {

// User-supplied configuration is unusable (bad dimensions, negative
// coefficients, incompatible applied currents, unknown keys, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// An internal precondition was violated (size mismatch, malformed CSR).
// These indicate caller bugs, not bad input data.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Numerical breakdown inside an iterative method (non-positive curvature in
// CG, non-SPD pivot in a Cholesky factorization).
class BreakdownError : public std::runtime_error {
 public:
  explicit BreakdownError(const std::string& what) : std::runtime_error(what) {}
};

// File I/O failure (checkpoint, report output).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cardionl
