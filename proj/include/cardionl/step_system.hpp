#pragma once

#include <memory>

#include "cardionl/bidomain.hpp"
#include "cardionl/gmg.hpp"
#include "cardionl/nonlinear.hpp"

namespace cardionl {

// Adapter presenting one implicit bidomain step to the nonlinear solvers.
// Owns the (state-independent) V-cycle preconditioner so repeated solves of
// consecutive steps reuse the hierarchy.
class BidomainSystem final : public NonlinearSystem {
 public:
  explicit BidomainSystem(const BidomainProblem& p)
      : p_(p), pc_(p.build_preconditioner()) {}

  std::size_t size() const override { return p_.size(); }
  Vector residual(const Vector& x) const override { return p_.residual(x); }
  CsrMatrix jacobian(const Vector& x) const override { return p_.jacobian(x); }
  void project(Vector& x) const override { p_.apply_gauge(x); }
  // The stacked operator annihilates the constant vector regardless of
  // whether the gauge retraction is enabled.
  bool constant_nullspace() const override { return true; }
  const Preconditioner& preconditioner() const override { return *pc_; }

  std::unique_ptr<Preconditioner> jacobian_preconditioner(const CsrMatrix& j) const override {
    const StructuredGrid& g = p_.grid();
    GmgOptions o;
    o.fields = 2;
    o.regularize_nullspace = true;  // the stacked operator annihilates constants
    return std::make_unique<GmgHierarchy>(std::array<int, 3>{g.nx, g.ny, g.nz}, j, o);
  }

 private:
  const BidomainProblem& p_;
  std::unique_ptr<Preconditioner> pc_;
};

class MonodomainSystem final : public NonlinearSystem {
 public:
  explicit MonodomainSystem(const MonodomainProblem& p)
      : p_(p), pc_(p.build_preconditioner()) {}

  std::size_t size() const override { return p_.size(); }
  Vector residual(const Vector& x) const override { return p_.residual(x); }
  CsrMatrix jacobian(const Vector& x) const override { return p_.jacobian(x); }
  const Preconditioner& preconditioner() const override { return *pc_; }

  std::unique_ptr<Preconditioner> jacobian_preconditioner(const CsrMatrix& j) const override {
    const StructuredGrid& g = p_.grid();
    return std::make_unique<GmgHierarchy>(std::array<int, 3>{g.nx, g.ny, g.nz}, j,
                                          GmgOptions{});
  }

 private:
  const MonodomainProblem& p_;
  std::unique_ptr<Preconditioner> pc_;
};

}  // namespace cardionl
