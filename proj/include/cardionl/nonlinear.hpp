#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cardionl/csr.hpp"
#include "cardionl/dense.hpp"
#include "cardionl/errors.hpp"
#include "cardionl/linear_solve.hpp"
#include "cardionl/vector_ops.hpp"

namespace cardionl {

// Abstract step problem driven by the nonlinear solvers.  residual() is the
// exact gradient of the step potential, jacobian() its symmetric Hessian;
// the first-order methods rely on that identification.
class NonlinearSystem {
 public:
  virtual ~NonlinearSystem() = default;
  virtual std::size_t size() const = 0;
  virtual Vector residual(const Vector& x) const = 0;
  virtual CsrMatrix jacobian(const Vector& x) const = 0;
  // Projection applied after every update (gauge retraction; default none).
  virtual void project(Vector& x) const { (void)x; }
  // True when the Jacobian has the constant vector in its null space, so
  // inner Krylov solves must deflate it.
  virtual bool constant_nullspace() const { return false; }
  virtual const Preconditioner& preconditioner() const = 0;
  // A multigrid hierarchy built on the given Jacobian, used as the initial
  // inverse approximation of the limited-memory BFGS solver.  Systems that
  // cannot provide one return nullptr; the solver then falls back to the
  // stationary preconditioner above.
  virtual std::unique_ptr<Preconditioner> jacobian_preconditioner(const CsrMatrix& j) const {
    (void)j;
    return nullptr;
  }
};

enum class NlMethod { newton, inewton, qn, ngmres, ncg };
enum class QnInitial { preonly, jaclow };
enum class NcgBeta { fr, prp, dy, cd };

struct NonlinearSolveSpec {
  NlMethod method = NlMethod::newton;
  double atol = 1e-12;
  double rtol = 1e-6;
  double stol = 0.0;  // step-size tolerance; 0 disables the test
  int max_it = 2000;

  // inner Krylov (newton, inewton, and the jaclow initial matrix)
  double lin_rtol = 1e-8;
  int lin_max_it = 1000;

  double ew_rtol0 = 0.1;  // first forcing term of the adaptive-tolerance Newton

  int qn_m = 5;  // history length
  QnInitial qn_initial = QnInitial::preonly;
  int qn_jaclow_its = 10;

  int ngmres_m = 20;  // mixing window, candidate included

  NcgBeta ncg_beta = NcgBeta::fr;

  void check() const {
    if (max_it < 0 || qn_m < 1 || ngmres_m < 1 || qn_jaclow_its < 1)
      throw ConfigError("NonlinearSolveSpec: iteration counts must be positive");
    if (!(rtol >= 0) || !(atol >= 0) || !(stol >= 0))
      throw ConfigError("NonlinearSolveSpec: tolerances must be non-negative");
  }
};

struct SolveTrace {
  std::vector<double> residual_norms;  // residual_norms[0] is the initial norm
  std::vector<int> inner_iterations;   // inner work per outer iteration
  bool converged = false;
  std::string reason;  // atol | rtol | stol | max_it | diverged
  int restarts = 0;
  int skipped_pairs = 0;

  int iterations() const { return static_cast<int>(residual_norms.size()) - 1; }
  long total_inner() const {
    long s = 0;
    for (int i : inner_iterations) s += i;
    return s;
  }
};

// Least-squares estimate of the convergence order of a residual history:
// the slope of log r_{k+1} against log r_k over successive pairs.  A
// geometrically converging sequence fits slope 1 regardless of its rate,
// an exactly quadratic one slope 2; the estimate is invariant under
// rescaling the whole history.  Pairs whose successor lies within
// plateau_factor of the smallest entry are dropped when plateau_factor > 1,
// so a terminal stagnation phase does not flatten the slope; pass 0 to fit
// every positive pair of a cleanly terminated history.
inline double fit_convergence_order(const std::vector<double>& r,
                                    double plateau_factor = 0.0) {
  double rmin = std::numeric_limits<double>::infinity();
  for (double v : r)
    if (v > 0.0 && v < rmin) rmin = v;
  const double floor = plateau_factor > 1.0 ? plateau_factor * rmin : 0.0;
  std::vector<double> x, y;
  for (std::size_t k = 0; k + 1 < r.size(); ++k) {
    if (!(r[k] > floor) || !(r[k + 1] > 0.0)) continue;
    if (floor > 0.0 && !(r[k + 1] > floor)) continue;
    x.push_back(std::log(r[k]));
    y.push_back(std::log(r[k + 1]));
  }
  if (x.size() < 2) throw BreakdownError("fit_convergence_order: fewer than two usable pairs");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw BreakdownError("fit_convergence_order: degenerate history");
  return sxy / sxx;
}

// ==== Limited-memory BFGS kernel ===========================================

struct LbfgsPair {
  Vector s, y;
  double rho;  // 1 / (y^T s)
};

// Two-loop recursion: returns H g where H is the inverse-Hessian estimate
// built from the pair history (oldest first) on top of the initial action
// b0(g) = B0^-1 g.
inline Vector lbfgs_apply(const std::deque<LbfgsPair>& pairs, const Vector& g,
                          const std::function<void(const Vector&, Vector&)>& b0) {
  Vector q = g;
  std::vector<double> alpha(pairs.size());
  for (std::size_t idx = pairs.size(); idx-- > 0;) {
    const LbfgsPair& p = pairs[idx];
    alpha[idx] = p.rho * dot(p.s, q);
    axpy(-alpha[idx], p.y, q);
  }
  Vector r;
  b0(q, r);
  for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
    const LbfgsPair& p = pairs[idx];
    const double beta = p.rho * dot(p.y, r);
    axpy(alpha[idx] - beta, p.s, r);
  }
  return r;
}

// Curvature guard: a pair enters the history only if s^T y exceeds the
// round-off threshold relative to ||s|| ||y||.
inline bool lbfgs_pair_admissible(const Vector& s, const Vector& y) {
  return dot(s, y) > 1e-14 * nrm2(s) * nrm2(y);
}

// ==== Solver drivers ========================================================

namespace detail {

struct ConvergenceGate {
  double atol, rtol, stol;
  double target = 0.0;

  // Returns true when fn decides termination; fills trace.
  bool initial(double f0, SolveTrace& trace) {
    target = std::max(atol, rtol * f0);
    trace.residual_norms.push_back(f0);
    if (!std::isfinite(f0)) {
      trace.reason = "diverged";
      return true;
    }
    if (f0 <= atol) {
      trace.converged = true;
      trace.reason = "atol";
      return true;
    }
    return false;
  }

  bool step(double fn, SolveTrace& trace) {
    trace.residual_norms.push_back(fn);
    if (!std::isfinite(fn)) {
      trace.reason = "diverged";
      return true;
    }
    if (fn <= atol) {
      trace.converged = true;
      trace.reason = "atol";
      return true;
    }
    if (fn <= target) {
      trace.converged = true;
      trace.reason = "rtol";
      return true;
    }
    return false;
  }

  bool small_step(double step_norm, double x_norm, SolveTrace& trace) const {
    if (stol > 0.0 && step_norm <= stol * x_norm) {
      trace.converged = true;
      trace.reason = "stol";
      return true;
    }
    return false;
  }
};

inline void finish_max_it(SolveTrace& trace) {
  if (trace.reason.empty()) trace.reason = "max_it";
}

}  // namespace detail

// Full-step Newton with a preconditioned CG inner solve at fixed tolerance.
// With forcing != nullptr the inner tolerance is chosen adaptively from the
// previous step's linear-model residual (classical choice-1 forcing, clamped
// to [1e-6, 0.9]).
inline SolveTrace newton_like_solve(const NonlinearSystem& sys, Vector& x,
                                    const NonlinearSolveSpec& spec, bool adaptive_forcing) {
  SolveTrace trace;
  detail::ConvergenceGate gate{spec.atol, spec.rtol, spec.stol};
  sys.project(x);
  Vector f = sys.residual(x);
  double fn = nrm2(f);
  if (gate.initial(fn, trace)) return trace;

  LinearSolveSpec lin;
  lin.rtol = spec.lin_rtol;
  lin.max_it = spec.lin_max_it;
  lin.project_nullspace = sys.constant_nullspace();

  double prev_fn = fn, prev_model_res = 0.0;
  for (int k = 0; k < spec.max_it; ++k) {
    if (adaptive_forcing) {
      double eta = spec.ew_rtol0;
      if (k > 0) eta = std::abs(fn - prev_model_res) / prev_fn;
      lin.rtol = std::min(0.9, std::max(1e-6, eta));
    }
    const CsrMatrix j = sys.jacobian(x);
    Vector b = f;
    scal(-1.0, b);
    Vector dx(x.size(), 0.0);
    const LinearResult lr = pcg_solve(j, b, dx, lin, sys.preconditioner());
    trace.inner_iterations.push_back(lr.iterations);
    prev_fn = fn;
    prev_model_res = lr.final_residual;  // ||F + J dx|| after the inner solve
    axpy(1.0, dx, x);
    sys.project(x);
    f = sys.residual(x);
    fn = nrm2(f);
    if (gate.step(fn, trace)) return trace;
    if (gate.small_step(nrm2(dx), nrm2(x), trace)) return trace;
  }
  detail::finish_max_it(trace);
  return trace;
}

// Limited-memory BFGS with fixed unit step.  The initial matrix is the
// Jacobian at the starting point: applied through one V-cycle of the step
// preconditioner (preonly) or through a fixed-count preconditioned CG solve
// with the assembled J(x0) (jaclow).  History never restarts; pairs failing
// the curvature guard are skipped.
inline SolveTrace qn_solve(const NonlinearSystem& sys, Vector& x,
                           const NonlinearSolveSpec& spec) {
  SolveTrace trace;
  detail::ConvergenceGate gate{spec.atol, spec.rtol, spec.stol};
  sys.project(x);
  Vector f = sys.residual(x);
  double fn = nrm2(f);
  if (gate.initial(fn, trace)) return trace;

  // Both initial-matrix modes start from the Jacobian at the step's initial
  // guess: preonly applies its multigrid cycle once, jaclow runs a fixed
  // number of multigrid-preconditioned CG iterations on it.
  const CsrMatrix j0 = sys.jacobian(x);
  const std::unique_ptr<Preconditioner> jpc = sys.jacobian_preconditioner(j0);
  const Preconditioner& b0pc = jpc ? *jpc : sys.preconditioner();
  LinearSolveSpec lin;
  int inner_cost = 1;
  if (spec.qn_initial == QnInitial::jaclow) {
    lin.mode = LinearSolveSpec::Mode::fixed_it;
    lin.fixed_its = spec.qn_jaclow_its;
    lin.project_nullspace = sys.constant_nullspace();
    inner_cost = spec.qn_jaclow_its;
  }
  std::function<void(const Vector&, Vector&)> b0;
  if (spec.qn_initial == QnInitial::preonly) {
    b0 = [&](const Vector& r, Vector& z) { b0pc.apply(r, z); };
  } else {
    b0 = [&](const Vector& r, Vector& z) {
      z.assign(r.size(), 0.0);
      pcg_solve(j0, r, z, lin, b0pc);
    };
  }

  std::deque<LbfgsPair> pairs;
  for (int k = 0; k < spec.max_it; ++k) {
    Vector d = lbfgs_apply(pairs, f, b0);
    scal(-1.0, d);
    Vector x_new = x;
    axpy(1.0, d, x_new);
    sys.project(x_new);
    Vector f_new = sys.residual(x_new);
    const double fn_new = nrm2(f_new);
    trace.inner_iterations.push_back(inner_cost);

    Vector s = x_new;
    axpy(-1.0, x, s);
    Vector y = f_new;
    axpy(-1.0, f, y);
    if (lbfgs_pair_admissible(s, y)) {
      const double sy = dot(s, y);
      if (static_cast<int>(pairs.size()) == spec.qn_m) pairs.pop_front();
      pairs.push_back({std::move(s), std::move(y), 1.0 / sy});
    } else {
      ++trace.skipped_pairs;
    }
    x = std::move(x_new);
    f = std::move(f_new);
    fn = fn_new;
    if (gate.step(fn, trace)) return trace;
    if (gate.small_step(nrm2(pairs.empty() ? d : pairs.back().s), nrm2(x), trace)) return trace;
  }
  detail::finish_max_it(trace);
  return trace;
}

// Nonlinear GMRES acceleration of the Richardson iteration x - F(x).  Each
// pass forms the candidate, mixes it with the previous iterates through a
// constrained linear least-squares fit of the residuals, and keeps the mixed
// point only if it beats the candidate; otherwise the window restarts from
// the candidate.
inline SolveTrace ngmres_solve(const NonlinearSystem& sys, Vector& x,
                               const NonlinearSolveSpec& spec) {
  SolveTrace trace;
  detail::ConvergenceGate gate{spec.atol, spec.rtol, spec.stol};
  sys.project(x);
  Vector f = sys.residual(x);
  double fn = nrm2(f);
  if (gate.initial(fn, trace)) return trace;

  struct Snap {
    Vector x, f;
  };
  std::deque<Snap> window;  // previous iterates, most recent last
  const std::size_t wmax = static_cast<std::size_t>(spec.ngmres_m) - 1;

  for (int k = 0; k < spec.max_it; ++k) {
    // candidate: one Richardson step
    Vector xm = x;
    axpy(-1.0, f, xm);
    sys.project(xm);
    Vector fm = sys.residual(xm);
    const double fmn = nrm2(fm);
    trace.inner_iterations.push_back(0);

    bool accepted_mix = false;
    if (!window.empty() && std::isfinite(fmn)) {
      const std::size_t m = window.size();
      DenseMatrix gram(m, m);
      Vector rhs(m, 0.0), diff_dot_fm(m, 0.0);
      std::vector<Vector> diffs(m);
      for (std::size_t a = 0; a < m; ++a) {
        diffs[a] = window[a].f;
        axpy(-1.0, fm, diffs[a]);
        diff_dot_fm[a] = dot(diffs[a], fm);
        rhs[a] = -diff_dot_fm[a];
      }
      double gmax = 0.0;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a; b < m; ++b) {
          const double v = dot(diffs[a], diffs[b]);
          gram(a, b) = v;
          gram(b, a) = v;
          if (a == b) gmax = std::max(gmax, v);
        }
      for (std::size_t a = 0; a < m; ++a) gram(a, a) += 1e-12 * std::max(gmax, 1.0);
      Vector beta;
      bool solved = true;
      try {
        beta = CholeskyFactor(gram).solve(rhs);
      } catch (const BreakdownError&) {
        solved = false;
      }
      if (solved) {
        // weights over {window..., candidate}; they sum to one by
        // construction and are renormalized against round-off
        double alpha_m = 1.0;
        for (double b : beta) alpha_m -= b;
        double sum = alpha_m;
        for (double b : beta) sum += b;
        if (std::abs(sum) > 1e-300) {
          const double inv = 1.0 / sum;
          alpha_m *= inv;
          for (double& b : beta) b *= inv;
          Vector trial(x.size(), 0.0);
          axpy(alpha_m, xm, trial);
          for (std::size_t a = 0; a < m; ++a) axpy(beta[a], window[a].x, trial);
          sys.project(trial);
          Vector ft = sys.residual(trial);
          const double ftn = nrm2(ft);
          if (ftn < fmn) {
            if (window.size() == wmax && wmax > 0) window.pop_front();
            if (wmax > 0) window.push_back({x, f});
            x = std::move(trial);
            f = std::move(ft);
            fn = ftn;
            accepted_mix = true;
          }
        }
      }
    }
    if (!accepted_mix) {
      // restart (or plain Richardson when the window is empty)
      if (!window.empty()) {
        window.clear();
        ++trace.restarts;
      }
      if (wmax > 0) window.push_back({x, f});
      x = std::move(xm);
      f = std::move(fm);
      fn = fmn;
    }
    if (gate.step(fn, trace)) return trace;
  }
  detail::finish_max_it(trace);
  return trace;
}

// Nonlinear conjugate gradients on the step potential with fixed unit step;
// the residual doubles as the gradient.  Four update formulas; a vanishing
// denominator restarts with the steepest-descent direction.
inline SolveTrace ncg_solve(const NonlinearSystem& sys, Vector& x,
                            const NonlinearSolveSpec& spec) {
  SolveTrace trace;
  detail::ConvergenceGate gate{spec.atol, spec.rtol, spec.stol};
  sys.project(x);
  Vector g = sys.residual(x);
  double gn = nrm2(g);
  if (gate.initial(gn, trace)) return trace;

  Vector p = g;
  scal(-1.0, p);
  for (int k = 0; k < spec.max_it; ++k) {
    axpy(1.0, p, x);
    sys.project(x);
    Vector g_new = sys.residual(x);
    const double gn_new = nrm2(g_new);
    trace.inner_iterations.push_back(0);

    double num = dot(g_new, g_new), den = 1.0;
    switch (spec.ncg_beta) {
      case NcgBeta::fr:
        den = dot(g, g);
        break;
      case NcgBeta::prp: {
        Vector diff = g_new;
        axpy(-1.0, g, diff);
        num = dot(g_new, diff);
        den = dot(g, g);
        break;
      }
      case NcgBeta::dy: {
        Vector diff = g_new;
        axpy(-1.0, g, diff);
        den = -dot(p, diff);
        break;
      }
      case NcgBeta::cd:
        den = dot(p, g_new);
        break;
    }
    double beta = 0.0;
    if (std::abs(den) < 1e-300) {
      ++trace.restarts;  // fall back to steepest descent
    } else {
      beta = num / den;
    }
    axpby(-1.0, g_new, beta, p);
    g = std::move(g_new);
    gn = gn_new;
    if (gate.step(gn, trace)) return trace;
  }
  detail::finish_max_it(trace);
  return trace;
}

inline SolveTrace nonlinear_solve(const NonlinearSystem& sys, Vector& x,
                                  const NonlinearSolveSpec& spec) {
  spec.check();
  if (x.size() != sys.size()) throw ContractError("nonlinear_solve: state size mismatch");
  switch (spec.method) {
    case NlMethod::newton:
      return newton_like_solve(sys, x, spec, false);
    case NlMethod::inewton:
      return newton_like_solve(sys, x, spec, true);
    case NlMethod::qn:
      return qn_solve(sys, x, spec);
    case NlMethod::ngmres:
      return ngmres_solve(sys, x, spec);
    case NlMethod::ncg:
      return ncg_solve(sys, x, spec);
  }
  throw ContractError("nonlinear_solve: unknown method");
}

}  // namespace cardionl
