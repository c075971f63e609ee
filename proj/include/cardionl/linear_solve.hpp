#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "cardionl/csr.hpp"
#include "cardionl/errors.hpp"
#include "cardionl/vector_ops.hpp"

namespace cardionl {

// Preconditioner action z = P^-1 r.
class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual void apply(const Vector& r, Vector& z) const = 0;
};

class IdentityPc final : public Preconditioner {
 public:
  void apply(const Vector& r, Vector& z) const override { z = r; }
};

class JacobiPc final : public Preconditioner {
 public:
  explicit JacobiPc(const CsrMatrix& a) : inv_diag_(a.diagonal()) {
    for (std::size_t i = 0; i < inv_diag_.size(); ++i) {
      if (inv_diag_[i] == 0.0)
        throw ContractError("JacobiPc: zero diagonal at row " + std::to_string(i));
      inv_diag_[i] = 1.0 / inv_diag_[i];
    }
  }
  void apply(const Vector& r, Vector& z) const override {
    check_same_size(r, inv_diag_, "JacobiPc::apply");
    z.resize(r.size());
    parallel_for(r.size(), [&](std::size_t i) { z[i] = inv_diag_[i] * r[i]; });
  }

 private:
  Vector inv_diag_;
};

struct LinearSolveSpec {
  enum class Mode { standard, preonly, fixed_it };
  Mode mode = Mode::standard;
  double rtol = 1e-8;
  double atol = 0.0;
  int max_it = 1000;
  int fixed_its = 10;               // iteration count in fixed_it mode
  bool project_nullspace = false;   // remove the constant component (pure
                                    // Neumann operators are singular on it)
};

struct LinearResult {
  int iterations = 0;
  double final_residual = 0.0;  // unpreconditioned ||b - A x||
  bool converged = false;
};

namespace detail {
inline void remove_mean(Vector& v) {
  const double m = mean(v);
  shift(v, -m);
}
}  // namespace detail

// Preconditioned conjugate gradients on an SPD (or compatibly singular)
// system.  Convergence is tested on the true residual norm
// ||b - A x|| <= max(atol, rtol ||b||).
inline LinearResult pcg_solve(const CsrMatrix& a, const Vector& b_in, Vector& x,
                              const LinearSolveSpec& spec, const Preconditioner& pc) {
  if (a.rows != a.cols) throw ContractError("pcg_solve: matrix not square");
  if (b_in.size() != a.rows) throw ContractError("pcg_solve: rhs size mismatch");
  if (x.size() != a.rows) x.assign(a.rows, 0.0);

  Vector b = b_in;
  if (spec.project_nullspace) {
    detail::remove_mean(b);
    detail::remove_mean(x);
  }

  LinearResult res;
  if (spec.mode == LinearSolveSpec::Mode::preonly) {
    pc.apply(b, x);
    if (spec.project_nullspace) detail::remove_mean(x);
    Vector r = a.mult(x);
    axpby(1.0, b, -1.0, r);
    res.iterations = 0;
    res.final_residual = nrm2(r);
    res.converged = true;
    return res;
  }

  const bool until_count = spec.mode == LinearSolveSpec::Mode::fixed_it;
  const int max_it = until_count ? spec.fixed_its : spec.max_it;

  Vector r = a.mult(x);
  axpby(1.0, b, -1.0, r);  // r = b - A x
  const double target = std::max(spec.atol, spec.rtol * nrm2(r));
  Vector z(a.rows), p(a.rows), ap(a.rows);
  pc.apply(r, z);
  if (spec.project_nullspace) detail::remove_mean(z);
  p = z;
  double rz = dot(r, z);
  double rnorm = nrm2(r);

  for (int it = 0; it < max_it; ++it) {
    if (!until_count && rnorm <= target) {
      res.converged = true;
      break;
    }
    if (rnorm == 0.0) {
      res.converged = true;
      break;
    }
    a.mult(p, ap);
    const double pap = dot(p, ap);
    if (pap <= 0.0)
      throw BreakdownError("pcg_solve: non-positive curvature p^T A p = " +
                           std::to_string(pap) + " at iteration " + std::to_string(it));
    const double alpha = rz / pap;
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    pc.apply(r, z);
    if (spec.project_nullspace) detail::remove_mean(z);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    axpby(1.0, z, beta, p);
    rnorm = nrm2(r);
    res.iterations = it + 1;
  }
  if (!until_count && !res.converged) res.converged = rnorm <= target;
  if (until_count) res.converged = true;
  res.final_residual = rnorm;
  return res;
}

}  // namespace cardionl
