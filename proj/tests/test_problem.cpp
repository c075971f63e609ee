// Step-problem contracts: the residual is the gradient of the scalar
// potential and the Jacobian its Hessian (checked by finite differences and
// closed forms on constant fields), the stacked operator is symmetric with an
// exact constant null vector, the potential is gauge invariant, applied
// currents must balance, and the convexity step-size bound follows the
// derivative range.

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "cardionl/bidomain.hpp"
#include "cardionl/dense.hpp"
#include "cardionl/errors.hpp"
#include "cardionl/fem.hpp"
#include "cardionl/grid.hpp"
#include "cardionl/ionic.hpp"
#include "cardionl/vector_ops.hpp"

namespace cardionl {
namespace {

Eigen::MatrixXd to_eigen(const CsrMatrix& a) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.rows),
                                            static_cast<Eigen::Index>(a.cols));
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p)
      m(static_cast<Eigen::Index>(r), a.col_idx[p]) = a.vals[p];
  return m;
}

struct Fixture {
  StructuredGrid g;
  FitzHughNagumo model;
  CsrMatrix m, ki, ke;

  explicit Fixture(int n, double h = 0.1)
      : g(n, n, n, h, h, h),
        m(assemble_mass(g)),
        ki(assemble_stiffness_iso(g, 3e-3)),
        ke(assemble_stiffness_iso(g, 2e-3)) {}
};

Vector random_vector(std::size_t n, std::mt19937& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vector v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

TEST(Reaction, ConstantFieldsMatchClosedForms) {
  const Fixture fx(3);
  const ReactionAssembler ra(fx.g, fx.model);
  const std::size_t n = fx.g.node_count();
  const double c = 0.7, d = 0.2;
  const Vector v(n, c), w(n, d);

  const auto ext = fx.g.extent();
  const double volume = ext[0] * ext[1] * ext[2];
  EXPECT_NEAR(ra.energy(v, w), volume * fx.model.theta(c, d), 1e-13 * volume);

  Vector mom;
  ra.moment(v, w, mom);
  const Vector nodal = lumped_mass(fx.m);
  const double iv = fx.model.i_ion(c, d);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(mom[i], iv * nodal[i], 1e-13);

  Vector vals;
  ra.weighted_mass(v, w, fx.m, vals);
  const double di = fx.model.di_ion_dv(c, d);
  for (std::size_t p = 0; p < fx.m.nnz(); ++p)
    EXPECT_NEAR(vals[p], di * fx.m.vals[p], 1e-13);
}

TEST(Reaction, MomentIsTheDerivativeOfTheEnergy) {
  const Fixture fx(3);
  const ReactionAssembler ra(fx.g, fx.model);
  const std::size_t n = fx.g.node_count();
  std::mt19937 rng(11);
  const Vector v = random_vector(n, rng, -0.4, 1.4);
  const Vector w = random_vector(n, rng, -0.3, 0.5);
  const Vector dir = random_vector(n, rng, -1.0, 1.0);

  Vector mom;
  ra.moment(v, w, mom);

  const double h = 1e-6;
  Vector vp = v, vm = v;
  axpy(h, dir, vp);
  axpy(-h, dir, vm);
  const double fd = (ra.energy(vp, w) - ra.energy(vm, w)) / (2.0 * h);
  EXPECT_NEAR(fd, dot(mom, dir), 1e-6 * (1.0 + std::abs(fd)));

  // and the weighted mass is the derivative of the moment
  Vector vals;
  ra.weighted_mass(v, w, fx.m, vals);
  CsrMatrix md = fx.m;
  md.vals = vals;
  Vector jd;
  md.mult(dir, jd);
  Vector momp, momm;
  ra.moment(vp, w, momp);
  ra.moment(vm, w, momm);
  for (std::size_t i = 0; i < n; ++i) {
    const double fdi = (momp[i] - momm[i]) / (2.0 * h);
    EXPECT_NEAR(jd[i], fdi, 1e-6 * (1.0 + std::abs(fdi)));
  }
}

BidomainProblem make_problem(const Fixture& fx, double tau = 0.05,
                             MembraneParams mp = {}) {
  return BidomainProblem(fx.g, fx.model, mp, tau, fx.m, fx.ki, fx.ke);
}

// random frozen data with balanced applied currents
void install_step(BidomainProblem& p, std::mt19937& rng) {
  const std::size_t n = p.node_count();
  Vector vprev = random_vector(n, rng, -0.2, 1.2);
  Vector w = random_vector(n, rng, -0.1, 0.4);
  Vector iapp = random_vector(n, rng, -2.0, 2.0);
  Vector iext = iapp;
  scal(-1.0, iext);
  p.set_step(std::move(vprev), std::move(w), iapp, iext);
}

TEST(StepProblem, ResidualIsTheGradientOfThePotential) {
  const Fixture fx(2);
  BidomainProblem p = make_problem(fx);
  std::mt19937 rng(17);
  install_step(p, rng);

  Vector u = random_vector(p.size(), rng, -0.5, 1.0);
  const Vector f = p.residual(u);

  const double h = 1e-5;
  Vector fd(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double saved = u[j];
    u[j] = saved + h;
    const double psi_p = p.potential(u);
    u[j] = saved - h;
    const double psi_m = p.potential(u);
    u[j] = saved;
    fd[j] = (psi_p - psi_m) / (2.0 * h);
  }
  Vector diff = fd;
  axpy(-1.0, f, diff);
  EXPECT_LE(nrm2(diff), 1e-6 * nrm2(f));
}

TEST(StepProblem, JacobianMatchesResidualDifferencesAndIsSymmetric) {
  const Fixture fx(2);
  BidomainProblem p = make_problem(fx);
  std::mt19937 rng(19);
  install_step(p, rng);

  Vector u = random_vector(p.size(), rng, -0.5, 1.0);
  const CsrMatrix j = p.jacobian(u);
  const Eigen::MatrixXd jd = to_eigen(j);
  const double scale = jd.cwiseAbs().maxCoeff();

  // exact symmetry and exact constant null vector
  EXPECT_LE((jd - jd.transpose()).cwiseAbs().maxCoeff(), 1e-12 * scale);
  Vector ones(p.size(), 1.0), jones;
  j.mult(ones, jones);
  EXPECT_LE(nrm2(jones), 1e-12 * scale * std::sqrt(static_cast<double>(p.size())));

  const double h = 1e-6;
  Eigen::MatrixXd fd(jd.rows(), jd.cols());
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double saved = u[c];
    u[c] = saved + h;
    const Vector fp = p.residual(u);
    u[c] = saved - h;
    const Vector fm = p.residual(u);
    u[c] = saved;
    for (std::size_t r = 0; r < p.size(); ++r)
      fd(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          (fp[r] - fm[r]) / (2.0 * h);
  }
  EXPECT_LE((jd - fd).cwiseAbs().maxCoeff(), 1e-5 * scale);
}

TEST(StepProblem, PotentialAndResidualAreGaugeInvariant) {
  const Fixture fx(2);
  BidomainProblem p = make_problem(fx);
  std::mt19937 rng(23);
  install_step(p, rng);

  Vector u = random_vector(p.size(), rng, -0.5, 1.0);
  const double psi = p.potential(u);
  const Vector f = p.residual(u);
  const Vector v = p.v_of(u);

  Vector us = u;
  shift(us, 3.7);  // move along the constant null direction
  EXPECT_NEAR(p.potential(us), psi, 1e-10 * (1.0 + std::abs(psi)));
  const Vector fs = p.residual(us);
  const Vector vs = p.v_of(us);
  for (std::size_t i = 0; i < p.size(); ++i)
    EXPECT_NEAR(fs[i], f[i], 1e-10 * (1.0 + std::abs(f[i])));
  // the difference of shifted potentials reproduces v up to rounding at the
  // scale of the shift
  for (std::size_t i = 0; i < p.node_count(); ++i) EXPECT_NEAR(vs[i], v[i], 1e-14);

  p.apply_gauge(us);
  double me = 0.0;
  for (std::size_t i = 0; i < p.node_count(); ++i) me += us[p.node_count() + i];
  me /= static_cast<double>(p.node_count());
  EXPECT_NEAR(me, 0.0, 1e-12);
  const Vector vg = p.v_of(us);
  for (std::size_t i = 0; i < p.node_count(); ++i) EXPECT_NEAR(vg[i], v[i], 1e-14);

  BidomainProblem free_gauge(fx.g, fx.model, MembraneParams{}, 0.05, fx.m, fx.ki, fx.ke,
                             /*gauge=*/false);
  Vector uu = u;
  free_gauge.apply_gauge(uu);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_DOUBLE_EQ(uu[i], u[i]);
}

TEST(StepProblem, UnbalancedAppliedCurrentsAreRejected) {
  const Fixture fx(2);
  BidomainProblem p = make_problem(fx);
  const std::size_t n = p.node_count();
  std::mt19937 rng(29);
  Vector iapp = random_vector(n, rng, -2.0, 2.0);
  Vector iext = iapp;
  scal(-1.0, iext);
  EXPECT_NO_THROW(p.set_step(Vector(n, 0.0), Vector(n, 0.0), iapp, iext));
  shift(iext, 0.5);  // break the balance
  EXPECT_THROW(p.set_step(Vector(n, 0.0), Vector(n, 0.0), iapp, iext), ConfigError);
}

TEST(StepProblem, ConvexityBoundFollowsTheDerivativeRange) {
  const Fixture fx(2);
  {
    MembraneParams unit;
    unit.chi = 1.0;
    unit.cm = 1.0;
    BidomainProblem p = make_problem(fx, 0.05, unit);
    // minimum of the current derivative on the default box is -7.28/3, so
    // the bound is 3/7.28
    EXPECT_NEAR(p.convexity_timestep_bound(), 3.0 / 7.28, 1e-15);
    EXPECT_NEAR(p.convexity_timestep_bound(), 0.41208791208791207, 1e-15);
    StateBox right;
    right.vlo = 2.0;
    right.vhi = 3.0;
    EXPECT_TRUE(std::isinf(p.convexity_timestep_bound(right)));
  }
  {
    BidomainProblem p = make_problem(fx);  // chi = 1000 scales the bound
    EXPECT_NEAR(p.convexity_timestep_bound(), 1000.0 * 3.0 / 7.28, 1e-12);
  }
}

TEST(StepProblem, PotentialIsConvexBelowTheBoundAndNotFarAbove) {
  const Fixture fx(1);  // 8 nodes, 16 unknowns
  MembraneParams unit;
  unit.chi = 1.0;
  unit.cm = 1.0;
  const double bound = 3.0 / 7.28;
  std::mt19937 rng(31);
  const std::size_t n = fx.g.node_count();

  BidomainProblem safe(fx.g, fx.model, unit, 0.9 * bound, fx.m, fx.ki, fx.ke);
  for (int trial = 0; trial < 5; ++trial) {
    Vector w = random_vector(n, rng, -0.5, 1.5);
    safe.set_step(random_vector(n, rng, -0.5, 1.5), std::move(w), Vector(n, 0.0),
                  Vector(n, 0.0));
    Vector v = random_vector(n, rng, -0.5, 1.5);
    Vector ue = random_vector(n, rng, -1.0, 1.0);
    Vector u(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = v[i] + ue[i];
      u[n + i] = ue[i];
    }
    const Eigen::MatrixXd jd = to_eigen(safe.jacobian(u));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jd);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  }

  BidomainProblem unsafe(fx.g, fx.model, unit, 10.0 * bound, fx.m, fx.ki, fx.ke);
  unsafe.set_step(Vector(n, 0.0), Vector(n, 0.0), Vector(n, 0.0), Vector(n, 0.0));
  // constant state at the derivative minimum: curvature a + min dI/dv < 0
  Vector u(2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) u[i] = 1.1 / 3.0;
  const Eigen::MatrixXd jd = to_eigen(unsafe.jacobian(u));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jd);
  EXPECT_LT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(StepProblem, PreconditionerIsSymmetricPositiveDefinite) {
  const Fixture fx(4);
  BidomainProblem p = make_problem(fx);
  const auto pc = p.build_preconditioner();
  std::mt19937 rng(37);
  const Vector x = random_vector(p.size(), rng, -1.0, 1.0);
  const Vector y = random_vector(p.size(), rng, -1.0, 1.0);
  Vector px, py;
  pc->apply(x, px);
  pc->apply(y, py);
  const double xpy = dot(x, py), ypx = dot(y, px);
  EXPECT_NEAR(xpy, ypx, 1e-12 * std::max(std::abs(xpy), std::abs(ypx)));
  EXPECT_GT(dot(x, px), 0.0);
}

TEST(StepProblem, ConstructionValidation) {
  const Fixture fx(2);
  EXPECT_THROW(BidomainProblem(fx.g, fx.model, MembraneParams{}, 0.0, fx.m, fx.ki, fx.ke),
               ConfigError);
  const Fixture other(3);
  EXPECT_THROW(
      BidomainProblem(fx.g, fx.model, MembraneParams{}, 0.05, other.m, fx.ki, fx.ke),
      ContractError);
  BidomainProblem p = make_problem(fx);
  EXPECT_THROW(p.residual(Vector(3, 0.0)), ContractError);
  EXPECT_THROW(p.set_step(Vector(3, 0.0), Vector(3, 0.0), Vector(3, 0.0), Vector(3, 0.0)),
               ContractError);
}

TEST(Monodomain, ImplicitResidualIsTheGradientAndTheJacobianItsDerivative) {
  const Fixture fx(2);
  const CsrMatrix k = assemble_stiffness_iso(fx.g, 1.2e-3);
  MonodomainProblem p(fx.g, fx.model, MembraneParams{}, 0.05, fx.m, k);
  std::mt19937 rng(41);
  const std::size_t n = p.size();
  p.set_step(random_vector(n, rng, -0.2, 1.2), random_vector(n, rng, -0.1, 0.4),
             random_vector(n, rng, -2.0, 2.0));

  Vector v = random_vector(n, rng, -0.4, 1.4);
  const Vector f = p.residual(v);
  const double h = 1e-5;
  Vector fd(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double saved = v[j];
    v[j] = saved + h;
    const double pp = p.potential(v);
    v[j] = saved - h;
    const double pm = p.potential(v);
    v[j] = saved;
    fd[j] = (pp - pm) / (2.0 * h);
  }
  Vector diff = fd;
  axpy(-1.0, f, diff);
  EXPECT_LE(nrm2(diff), 1e-6 * nrm2(f));

  const CsrMatrix j = p.jacobian(v);
  const Eigen::MatrixXd jd = to_eigen(j);
  const double scale = jd.cwiseAbs().maxCoeff();
  EXPECT_LE((jd - jd.transpose()).cwiseAbs().maxCoeff(), 1e-12 * scale);
  const double hh = 1e-6;
  for (std::size_t c = 0; c < n; ++c) {
    const double saved = v[c];
    v[c] = saved + hh;
    const Vector fp = p.residual(v);
    v[c] = saved - hh;
    const Vector fm = p.residual(v);
    v[c] = saved;
    for (std::size_t r = 0; r < n; ++r)
      EXPECT_NEAR(jd(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)),
                  (fp[r] - fm[r]) / (2.0 * hh), 1e-5 * scale);
  }
}

TEST(Monodomain, FrozenReactionModeIsLinearWithAFixedOperator) {
  const Fixture fx(2);
  const CsrMatrix k = assemble_stiffness_iso(fx.g, 1.2e-3);
  MonodomainProblem p(fx.g, fx.model, MembraneParams{}, 0.05, fx.m, k,
                      MonodomainProblem::Reaction::explicit_prev);
  std::mt19937 rng(43);
  const std::size_t n = p.size();
  p.set_step(random_vector(n, rng, -0.2, 1.2), random_vector(n, rng, -0.1, 0.4),
             random_vector(n, rng, -2.0, 2.0));

  const Vector v1 = random_vector(n, rng, -0.5, 1.5);
  const Vector v2 = random_vector(n, rng, -0.5, 1.5);
  Vector v12 = v1;
  axpy(1.0, v2, v12);
  const Vector f0 = p.residual(Vector(n, 0.0));
  const Vector f1 = p.residual(v1);
  const Vector f2 = p.residual(v2);
  const Vector f12 = p.residual(v12);
  for (std::size_t i = 0; i < n; ++i) {
    const double lin = (f1[i] - f0[i]) + (f2[i] - f0[i]) + f0[i];
    EXPECT_NEAR(f12[i], lin, 1e-10 * (1.0 + std::abs(lin)));
  }

  // the operator does not depend on the state and has no reaction curvature
  const CsrMatrix j1 = p.jacobian(v1);
  const CsrMatrix j2 = p.jacobian(v2);
  const double a = 1000.0 * 1.0 / 0.05;
  for (std::size_t q = 0; q < j1.nnz(); ++q) {
    EXPECT_DOUBLE_EQ(j1.vals[q], j2.vals[q]);
    EXPECT_NEAR(j1.vals[q], a * fx.m.vals[q] + k.vals[q], 1e-12 * (1.0 + std::abs(j1.vals[q])));
  }
}

TEST(Monodomain, HarmonicConductivityCombinesDirections) {
  Conductivity si;
  si.l = 3e-3;
  si.t = 3.1525e-4;
  Conductivity se;
  se.l = 2e-3;
  se.t = 1.3514e-3;
  const Conductivity m = harmonic_conductivity(si, se);
  EXPECT_NEAR(m.l, 3e-3 * 2e-3 / 5e-3, 1e-18);
  EXPECT_NEAR(m.t, si.t * se.t / (si.t + se.t), 1e-18);
  // unset sheet-normal value falls back to the transverse one on both sides
  EXPECT_NEAR(m.n, si.t * se.t / (si.t + se.t), 1e-18);

  Conductivity zi, ze;
  zi.l = 0.0;
  ze.l = 0.0;
  zi.t = ze.t = 1.0;
  EXPECT_DOUBLE_EQ(harmonic_conductivity(zi, ze).l, 0.0);
}

}  // namespace
}  // namespace cardionl
