#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <vector>

#include "cardionl/csr.hpp"
#include "cardionl/errors.hpp"
#include "cardionl/fem.hpp"
#include "cardionl/gmg.hpp"
#include "cardionl/grid.hpp"
#include "cardionl/ionic.hpp"
#include "cardionl/parallel.hpp"
#include "cardionl/vector_ops.hpp"

namespace cardionl {

// Tissue-level membrane constants.
struct MembraneParams {
  double chi = 1000.0;  // surface-to-volume ratio, 1/cm
  double cm = 1.0;      // membrane capacitance, uF/cm^2

  void check() const {
    if (!(chi > 0) || !(cm > 0))
      throw ConfigError("MembraneParams: chi and cm must be positive");
  }
};

// State box over which derivative bounds (and hence the convexity step-size
// bound) are taken.
struct StateBox {
  double vlo = -0.5, vhi = 1.5;
  double wlo = -0.5, whi = 1.5;
};

// ==== Reaction-term integration =============================================
//
// The ionic current, its primitive, and its derivative enter the discrete
// equations through fixed-quadrature integrals of the interpolated fields:
//
//   moment_i  = sum_e sum_q wq I(v_h(x_q), w_h(x_q)) phi_i(x_q)
//   energy    = sum_e sum_q wq Theta(v_h(x_q), w_h(x_q))
//   mass_ij   = sum_e sum_q wq dI/dv(v_h(x_q), w_h(x_q)) phi_i(x_q) phi_j(x_q)
//
// Using one rule for all three keeps energy' == moment and moment' == mass
// exactly at the discrete level, which the solver family relies on.  Since
// v_h(x_q) is a convex combination of nodal values, dI/dv at quadrature
// points obeys any bound derived from the nodal state box, which keeps the
// convexity step-size bound sharp.

class ReactionAssembler {
 public:
  ReactionAssembler(const StructuredGrid& g, const IonicModel& model)
      : grid_(g), model_(model), wdet_(g.hx * g.hy * g.hz / 8.0) {
    if (model.gating_count() != 1)
      throw ConfigError("ReactionAssembler: a single gating variable is required");
    const std::size_t ne = grid_.element_count();
    elem_nodes_.resize(ne * 8);
    std::size_t e = 0;
    for (int ek = 0; ek < g.nz; ++ek)
      for (int ej = 0; ej < g.ny; ++ej)
        for (int ei = 0; ei < g.nx; ++ei, ++e) {
          const std::array<std::size_t, 8> nodes = g.element_nodes(ei, ej, ek);
          for (int a = 0; a < 8; ++a) elem_nodes_[8 * e + static_cast<std::size_t>(a)] = nodes[static_cast<std::size_t>(a)];
        }
  }

  std::size_t node_count() const { return grid_.node_count(); }

  // out_i = integral of I(v_h, w_h) phi_i (no chi factor).
  void moment(const Vector& v, const Vector& w, Vector& out) const {
    scatter_kernel(v, w, out, [this](double vq, double wq) { return model_.i_ion(vq, wq); });
  }

  // integral of Theta(v_h, w_h) (no chi factor).
  double energy(const Vector& v, const Vector& w) const {
    const Q1Reference& ref = Q1Reference::get();
    const std::size_t ne = grid_.element_count();
    return parallel_sum(ne, [&](std::size_t e) {
      double vloc[8], wloc[8];
      gather(e, v, w, vloc, wloc);
      double s = 0.0;
      for (int q = 0; q < 8; ++q) {
        double vq = 0.0, wq = 0.0;
        for (int a = 0; a < 8; ++a) {
          vq += ref.shape[q][a] * vloc[a];
          wq += ref.shape[q][a] * wloc[a];
        }
        s += model_.theta(vq, wq);
      }
      return wdet_ * s;
    });
  }

  // Weighted-mass values on the given 27-point pattern (no chi factor):
  // vals[p] += integral of dI/dv(v_h, w_h) phi_r phi_c for pattern entry p.
  // The scatter map is built once against the pattern of `mass`.
  void weighted_mass(const Vector& v, const Vector& w, const CsrMatrix& pattern,
                     Vector& vals) const {
    ensure_scatter_map(pattern);
    const Q1Reference& ref = Q1Reference::get();
    vals.assign(pattern.nnz(), 0.0);
    const std::size_t ne = grid_.element_count();
    for (std::size_t e = 0; e < ne; ++e) {
      double vloc[8], wloc[8];
      gather(e, v, w, vloc, wloc);
      double em[64] = {0.0};
      for (int q = 0; q < 8; ++q) {
        double vq = 0.0, wq = 0.0;
        for (int a = 0; a < 8; ++a) {
          vq += ref.shape[q][a] * vloc[a];
          wq += ref.shape[q][a] * wloc[a];
        }
        const double c = wdet_ * model_.di_ion_dv(vq, wq);
        for (int a = 0; a < 8; ++a) {
          const double ca = c * ref.shape[q][a];
          for (int b = 0; b < 8; ++b) em[8 * a + b] += ca * ref.shape[q][b];
        }
      }
      const std::size_t* map = &scatter_map_[64 * e];
      for (int ab = 0; ab < 64; ++ab) vals[map[ab]] += em[ab];
    }
  }

 private:
  void gather(std::size_t e, const Vector& v, const Vector& w, double* vloc, double* wloc) const {
    const std::size_t* nodes = &elem_nodes_[8 * e];
    for (int a = 0; a < 8; ++a) {
      vloc[a] = v[nodes[a]];
      wloc[a] = w[nodes[a]];
    }
  }

  template <class F>
  void scatter_kernel(const Vector& v, const Vector& w, Vector& out, const F& f) const {
    const Q1Reference& ref = Q1Reference::get();
    const std::size_t n = grid_.node_count();
    const std::size_t ne = grid_.element_count();
    if (v.size() != n || w.size() != n)
      throw ContractError("ReactionAssembler: field size mismatch");
    out.assign(n, 0.0);
    ThreadPool& pool = ThreadPool::instance();
    const int workers = pool.workers();
    auto body = [&](Vector& acc, std::size_t eb, std::size_t ee) {
      for (std::size_t e = eb; e < ee; ++e) {
        double vloc[8], wloc[8], fq[8];
        gather(e, v, w, vloc, wloc);
        for (int q = 0; q < 8; ++q) {
          double vq = 0.0, wq = 0.0;
          for (int a = 0; a < 8; ++a) {
            vq += ref.shape[q][a] * vloc[a];
            wq += ref.shape[q][a] * wloc[a];
          }
          fq[q] = wdet_ * f(vq, wq);
        }
        const std::size_t* nodes = &elem_nodes_[8 * e];
        for (int a = 0; a < 8; ++a) {
          double s = 0.0;
          for (int q = 0; q < 8; ++q) s += ref.shape[q][a] * fq[q];
          acc[nodes[a]] += s;
        }
      }
    };
    if (workers == 1 || ne < 4096) {
      body(out, 0, ne);
      return;
    }
    std::vector<Vector> bufs(static_cast<std::size_t>(workers));
    pool.run(ne, [&](int c, std::size_t eb, std::size_t ee) {
      Vector& acc = bufs[static_cast<std::size_t>(c)];
      acc.assign(n, 0.0);
      body(acc, eb, ee);
    });
    // chunk-ordered merge keeps the result independent of scheduling
    parallel_for(n, [&](std::size_t i) {
      double s = 0.0;
      for (const Vector& acc : bufs) s += acc[i];
      out[i] = s;
    });
  }

  void ensure_scatter_map(const CsrMatrix& pattern) const {
    if (!scatter_map_.empty()) return;
    const std::size_t ne = grid_.element_count();
    scatter_map_.resize(ne * 64);
    for (std::size_t e = 0; e < ne; ++e) {
      const std::size_t* nodes = &elem_nodes_[8 * e];
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
          const std::size_t r = nodes[a], c = nodes[b];
          std::size_t pos = pattern.row_ptr[r];
          while (pos < pattern.row_ptr[r + 1] &&
                 static_cast<std::size_t>(pattern.col_idx[pos]) != c)
            ++pos;
          if (pos == pattern.row_ptr[r + 1])
            throw ContractError("ReactionAssembler: pattern misses an element pair");
          scatter_map_[64 * e + static_cast<std::size_t>(8 * a + b)] = pos;
        }
    }
  }

  StructuredGrid grid_;
  const IonicModel& model_;
  double wdet_;
  std::vector<std::size_t> elem_nodes_;
  mutable std::vector<std::size_t> scatter_map_;
};

// ==== Bidomain step problem =================================================
//
// One implicit step of the two-potential tissue model.  Unknowns are the
// stacked potentials u = (u_i; u_e), v = u_i - u_e, with the gating field
// already advanced and frozen.  The step equations are the gradient of
//
//   Psi(u) = chi cm/(2 tau) (v - v_prev)^T M (v - v_prev)
//          + 1/2 u_i^T K_i u_i + 1/2 u_e^T K_e u_e
//          + chi * integral Theta(v_h, w_h)
//          - (M I_app,i)^T u_i - (M I_app,e)^T u_e
//
// and the Jacobian is its (symmetric) Hessian.  Both identities are exact at
// the discrete level, not just up to quadrature error.
class BidomainProblem {
 public:
  BidomainProblem(const StructuredGrid& grid, const IonicModel& model, MembraneParams membrane,
                  double tau, CsrMatrix mass, CsrMatrix k_intra, CsrMatrix k_extra,
                  bool gauge = true)
      : grid_(grid),
        model_(model),
        membrane_(membrane),
        tau_(tau),
        gauge_(gauge),
        mass_(std::move(mass)),
        ki_(std::move(k_intra)),
        ke_(std::move(k_extra)),
        reaction_(grid, model) {
    membrane_.check();
    if (!(tau > 0)) throw ConfigError("BidomainProblem: tau must be positive");
    n_ = grid.node_count();
    if (mass_.rows != n_ || ki_.rows != n_ || ke_.rows != n_)
      throw ContractError("BidomainProblem: operator sizes do not match grid");
    if (mass_.row_ptr != ki_.row_ptr || mass_.col_idx != ki_.col_idx ||
        mass_.row_ptr != ke_.row_ptr || mass_.col_idx != ke_.col_idx)
      throw ContractError("BidomainProblem: operators must share one sparsity pattern");
    lumped_ = lumped_mass(mass_);
    v_prev_.assign(n_, model.v_ref());
    w_.assign(n_, 0.0);
    b_intra_.assign(n_, 0.0);
    b_extra_.assign(n_, 0.0);
    build_jacobian_pattern();
  }

  std::size_t node_count() const { return n_; }
  std::size_t size() const { return 2 * n_; }
  double tau() const { return tau_; }
  const MembraneParams& membrane() const { return membrane_; }
  const StructuredGrid& grid() const { return grid_; }
  const CsrMatrix& mass() const { return mass_; }
  const CsrMatrix& stiffness_intra() const { return ki_; }
  const CsrMatrix& stiffness_extra() const { return ke_; }
  const IonicModel& model() const { return model_; }
  bool gauge() const { return gauge_; }
  const Vector& v_prev() const { return v_prev_; }
  const Vector& gating() const { return w_; }

  // Installs the frozen data of one step.  Applied currents are nodal
  // densities; their weighted sums must cancel, otherwise the singular
  // operator has no solution and this throws.
  void set_step(Vector v_prev, Vector w_now, const Vector& iapp_intra,
                const Vector& iapp_extra) {
    if (v_prev.size() != n_ || w_now.size() != n_ || iapp_intra.size() != n_ ||
        iapp_extra.size() != n_)
      throw ContractError("BidomainProblem::set_step: field size mismatch");
    double imbalance = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      imbalance += lumped_[i] * (iapp_intra[i] + iapp_extra[i]);
      scale += lumped_[i] * (std::abs(iapp_intra[i]) + std::abs(iapp_extra[i]));
    }
    if (std::abs(imbalance) > 1e-10 * std::max(1.0, scale))
      throw ConfigError("BidomainProblem: applied currents violate compatibility, "
                        "weighted imbalance = " +
                        std::to_string(imbalance));
    v_prev_ = std::move(v_prev);
    w_ = std::move(w_now);
    mass_.mult(iapp_intra, b_intra_);
    mass_.mult(iapp_extra, b_extra_);
  }

  // F(u) = grad Psi(u), stacked (i; e) blocks.
  Vector residual(const Vector& u) const {
    check_state(u);
    const double a = membrane_.chi * membrane_.cm / tau_;
    Vector v = v_of(u);
    Vector dv = v;
    axpy(-1.0, v_prev_, dv);
    Vector mdv;
    mass_.mult(dv, mdv);
    scal(a, mdv);
    Vector react;
    reaction_.moment(v, w_, react);
    scal(membrane_.chi, react);

    Vector f(2 * n_);
    Vector tmp(n_);
    ki_.mult_ptr(u.data(), tmp.data());
    parallel_for(n_, [&](std::size_t i) { f[i] = mdv[i] + tmp[i] + react[i] - b_intra_[i]; });
    ke_.mult_ptr(u.data() + n_, tmp.data());
    parallel_for(n_, [&](std::size_t i) {
      f[n_ + i] = -mdv[i] + tmp[i] - react[i] - b_extra_[i];
    });
    return f;
  }

  double potential(const Vector& u) const {
    check_state(u);
    const double a = membrane_.chi * membrane_.cm / tau_;
    Vector v = v_of(u);
    Vector dv = v;
    axpy(-1.0, v_prev_, dv);
    Vector tmp(n_);
    mass_.mult(dv, tmp);
    double psi = 0.5 * a * dot(dv, tmp);
    ki_.mult_ptr(u.data(), tmp.data());
    psi += 0.5 * parallel_sum(n_, [&](std::size_t i) { return u[i] * tmp[i]; });
    ke_.mult_ptr(u.data() + n_, tmp.data());
    psi += 0.5 * parallel_sum(n_, [&](std::size_t i) { return u[n_ + i] * tmp[i]; });
    psi += membrane_.chi * reaction_.energy(v, w_);
    psi -= parallel_sum(n_, [&](std::size_t i) { return b_intra_[i] * u[i]; });
    psi -= parallel_sum(n_, [&](std::size_t i) { return b_extra_[i] * u[n_ + i]; });
    return psi;
  }

  // Symmetric block Jacobian
  //   [ aM + K_i + chi Md      -aM - chi Md     ]
  //   [    -aM - chi Md      aM + K_e + chi Md  ]
  // with Md the dI/dv-weighted mass; (1;1) is an exact null vector.
  CsrMatrix jacobian(const Vector& u) const {
    check_state(u);
    const double a = membrane_.chi * membrane_.cm / tau_;
    const double chi = membrane_.chi;
    Vector v = v_of(u);
    Vector md_vals;
    reaction_.weighted_mass(v, w_, mass_, md_vals);

    CsrMatrix j = jac_skeleton_;
    const std::size_t nnz = mass_.nnz();
    parallel_for(nnz, [&](std::size_t p) {
      const double am = a * mass_.vals[p];
      const double md = chi * md_vals[p];
      const double coupling = -am - md;
      const std::size_t row = pattern_row_[p];
      const std::size_t base_i = jac_skeleton_.row_ptr[row] + (p - mass_.row_ptr[row]);
      const std::size_t width = mass_.row_ptr[row + 1] - mass_.row_ptr[row];
      j.vals[base_i] = am + ki_.vals[p] + md;
      j.vals[base_i + width] = coupling;
      const std::size_t base_e = jac_skeleton_.row_ptr[n_ + row] + (p - mass_.row_ptr[row]);
      j.vals[base_e] = coupling;
      j.vals[base_e + width] = am + ke_.vals[p] + md;
    });
    return j;
  }

  // Largest tau for which the step potential stays convex on the state box:
  // chi cm / |Ilo| when the derivative lower bound Ilo is negative, else
  // unbounded.
  double convexity_timestep_bound(const StateBox& box = {}) const {
    const auto [lo, hi] = model_.di_ion_dv_range(box.vlo, box.vhi, box.wlo, box.whi);
    (void)hi;
    if (lo >= 0.0) return std::numeric_limits<double>::infinity();
    return membrane_.chi * membrane_.cm / std::abs(lo);
  }

  // Gauge retraction: shifts both potentials by mean(u_e).  This moves along
  // the exact null direction of Psi (v and all energies are unchanged) and
  // leaves mean(u_e) = 0.
  void apply_gauge(Vector& u) const {
    if (!gauge_) return;
    check_state(u);
    double m = 0.0;
    for (std::size_t i = 0; i < n_; ++i) m += u[n_ + i];
    m /= static_cast<double>(n_);
    shift(u, -m);
  }

  Vector v_of(const Vector& u) const {
    check_state(u);
    Vector v(n_);
    parallel_for(n_, [&](std::size_t i) { v[i] = u[i] - u[n_ + i]; });
    return v;
  }

  // Structure-exploiting preconditioner.  In the transformed variables
  // (v, u_e) with u_i = v + u_e the stacked operator becomes
  //   [ aM + K_i (+ chi Md)   K_i        ]
  //   [ K_i                   K_i + K_e  ]
  // i.e. one parabolic block (mass-shifted) and one purely elliptic block
  // (the mass terms cancel exactly on same-shift pairs).  The
  // preconditioner applies one V-cycle per transformed block and maps back:
  //     z = T diag(G_v, G_s) T^T r,     T = [I I; 0 I],
  // which is symmetric positive definite, hence admissible for CG.  Both
  // surrogates drop the reaction-curvature term, so the operator is
  // state-independent and is built once per step size.
  std::unique_ptr<Preconditioner> build_preconditioner() const {
    const double a = membrane_.chi * membrane_.cm / tau_;
    CsrMatrix sv = ki_, ss = ki_;
    for (std::size_t p = 0; p < mass_.nnz(); ++p) {
      sv.vals[p] += a * mass_.vals[p];
      ss.vals[p] += ke_.vals[p];
    }
    const std::array<int, 3> elems = {grid_.nx, grid_.ny, grid_.nz};
    auto gv = std::make_unique<GmgHierarchy>(elems, sv);
    GmgOptions elliptic;
    elliptic.regularize_nullspace = true;
    auto gs = std::make_unique<GmgHierarchy>(elems, ss, elliptic);
    return std::make_unique<TransformedBlockPc>(std::move(gv), std::move(gs), n_);
  }

 private:
  class TransformedBlockPc final : public Preconditioner {
   public:
    TransformedBlockPc(std::unique_ptr<GmgHierarchy> gv, std::unique_ptr<GmgHierarchy> gs,
                       std::size_t n)
        : gv_(std::move(gv)), gs_(std::move(gs)), n_(n) {}

    void apply(const Vector& r, Vector& z) const override {
      if (r.size() != 2 * n_) throw ContractError("TransformedBlockPc: size mismatch");
      Vector rv(n_), rs(n_);
      for (std::size_t i = 0; i < n_; ++i) {
        rv[i] = r[i];
        rs[i] = r[i] + r[n_ + i];
      }
      Vector zv, zs;
      gv_->apply(rv, zv);
      gs_->apply(rs, zs);
      z.resize(2 * n_);
      for (std::size_t i = 0; i < n_; ++i) {
        z[i] = zv[i] + zs[i];
        z[n_ + i] = zs[i];
      }
    }

   private:
    std::unique_ptr<GmgHierarchy> gv_, gs_;
    std::size_t n_;
  };

  void check_state(const Vector& u) const {
    if (u.size() != 2 * n_)
      throw ContractError("BidomainProblem: state must have 2 N entries");
  }

  void build_jacobian_pattern() {
    CsrMatrix j;
    j.rows = j.cols = 2 * n_;
    j.row_ptr.assign(2 * n_ + 1, 0);
    const std::size_t nnz = mass_.nnz();
    pattern_row_.resize(nnz);
    for (std::size_t r = 0; r < n_; ++r) {
      const std::size_t width = mass_.row_ptr[r + 1] - mass_.row_ptr[r];
      j.row_ptr[r + 1] = j.row_ptr[r] + 2 * width;
      for (std::size_t p = mass_.row_ptr[r]; p < mass_.row_ptr[r + 1]; ++p) pattern_row_[p] = r;
    }
    for (std::size_t r = 0; r < n_; ++r) {
      const std::size_t width = mass_.row_ptr[r + 1] - mass_.row_ptr[r];
      j.row_ptr[n_ + r + 1] = j.row_ptr[n_ + r] + 2 * width;
    }
    j.col_idx.resize(2 * 2 * nnz);
    j.vals.assign(2 * 2 * nnz, 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      std::size_t q = j.row_ptr[r];
      for (std::size_t p = mass_.row_ptr[r]; p < mass_.row_ptr[r + 1]; ++p)
        j.col_idx[q++] = mass_.col_idx[p];
      for (std::size_t p = mass_.row_ptr[r]; p < mass_.row_ptr[r + 1]; ++p)
        j.col_idx[q++] = static_cast<std::int32_t>(n_) + mass_.col_idx[p];
      std::size_t qe = j.row_ptr[n_ + r];
      for (std::size_t p = mass_.row_ptr[r]; p < mass_.row_ptr[r + 1]; ++p)
        j.col_idx[qe++] = mass_.col_idx[p];
      for (std::size_t p = mass_.row_ptr[r]; p < mass_.row_ptr[r + 1]; ++p)
        j.col_idx[qe++] = static_cast<std::int32_t>(n_) + mass_.col_idx[p];
    }
    jac_skeleton_ = std::move(j);
  }

  StructuredGrid grid_;
  const IonicModel& model_;
  MembraneParams membrane_;
  double tau_;
  bool gauge_;
  std::size_t n_ = 0;
  CsrMatrix mass_, ki_, ke_;
  ReactionAssembler reaction_;
  Vector lumped_;
  Vector v_prev_, w_;
  Vector b_intra_, b_extra_;
  CsrMatrix jac_skeleton_;
  std::vector<std::size_t> pattern_row_;
};

// ==== Monodomain reduction ==================================================

// Per-direction harmonic combination of the two compartments' conductivities.
inline Conductivity harmonic_conductivity(const Conductivity& si, const Conductivity& se) {
  auto h = [](double a, double b) { return (a + b) > 0 ? a * b / (a + b) : 0.0; };
  Conductivity m;
  m.l = h(si.l, se.l);
  m.t = h(si.t, se.t);
  m.n = h(si.normal(), se.normal());
  return m;
}

// Single-field step problem used by the operator-splitting comparison.  In
// implicit mode the reaction is taken at the unknown v (same variational
// structure as the two-field problem); in explicit mode it is taken at
// v_prev, which makes the step equations linear in v.
class MonodomainProblem {
 public:
  enum class Reaction { implicit, explicit_prev };

  MonodomainProblem(const StructuredGrid& grid, const IonicModel& model,
                    MembraneParams membrane, double tau, CsrMatrix mass, CsrMatrix stiffness,
                    Reaction reaction_mode = Reaction::implicit)
      : grid_(grid),
        model_(model),
        membrane_(membrane),
        tau_(tau),
        mode_(reaction_mode),
        mass_(std::move(mass)),
        k_(std::move(stiffness)),
        reaction_(grid, model) {
    membrane_.check();
    if (!(tau > 0)) throw ConfigError("MonodomainProblem: tau must be positive");
    n_ = grid.node_count();
    if (mass_.rows != n_ || k_.rows != n_)
      throw ContractError("MonodomainProblem: operator sizes do not match grid");
    if (mass_.row_ptr != k_.row_ptr || mass_.col_idx != k_.col_idx)
      throw ContractError("MonodomainProblem: operators must share one sparsity pattern");
    v_prev_.assign(n_, model.v_ref());
    w_.assign(n_, 0.0);
    b_.assign(n_, 0.0);
    react_prev_.assign(n_, 0.0);
  }

  std::size_t size() const { return n_; }
  double tau() const { return tau_; }
  const StructuredGrid& grid() const { return grid_; }
  const IonicModel& model() const { return model_; }
  const CsrMatrix& mass() const { return mass_; }
  const CsrMatrix& stiffness() const { return k_; }
  const Vector& v_prev() const { return v_prev_; }
  const Vector& gating() const { return w_; }
  Reaction reaction_mode() const { return mode_; }

  void set_step(Vector v_prev, Vector w_now, const Vector& iapp) {
    if (v_prev.size() != n_ || w_now.size() != n_ || iapp.size() != n_)
      throw ContractError("MonodomainProblem::set_step: field size mismatch");
    v_prev_ = std::move(v_prev);
    w_ = std::move(w_now);
    mass_.mult(iapp, b_);
    if (mode_ == Reaction::explicit_prev) {
      reaction_.moment(v_prev_, w_, react_prev_);
      scal(membrane_.chi, react_prev_);
    }
  }

  Vector residual(const Vector& v) const {
    check_state(v);
    const double a = membrane_.chi * membrane_.cm / tau_;
    Vector dv = v;
    axpy(-1.0, v_prev_, dv);
    Vector f;
    mass_.mult(dv, f);
    scal(a, f);
    Vector tmp;
    k_.mult(v, tmp);
    axpy(1.0, tmp, f);
    if (mode_ == Reaction::implicit) {
      Vector react;
      reaction_.moment(v, w_, react);
      axpy(membrane_.chi, react, f);
    } else {
      axpy(1.0, react_prev_, f);
    }
    axpy(-1.0, b_, f);
    return f;
  }

  double potential(const Vector& v) const {
    check_state(v);
    const double a = membrane_.chi * membrane_.cm / tau_;
    Vector dv = v;
    axpy(-1.0, v_prev_, dv);
    Vector tmp;
    mass_.mult(dv, tmp);
    double psi = 0.5 * a * dot(dv, tmp);
    k_.mult(v, tmp);
    psi += 0.5 * dot(v, tmp);
    if (mode_ == Reaction::implicit) {
      psi += membrane_.chi * reaction_.energy(v, w_);
    } else {
      psi += dot(react_prev_, v);
    }
    psi -= dot(b_, v);
    return psi;
  }

  CsrMatrix jacobian(const Vector& v) const {
    check_state(v);
    const double a = membrane_.chi * membrane_.cm / tau_;
    CsrMatrix j = mass_;
    if (mode_ == Reaction::implicit) {
      Vector md_vals;
      reaction_.weighted_mass(v, w_, mass_, md_vals);
      const double chi = membrane_.chi;
      parallel_for(mass_.nnz(), [&](std::size_t p) {
        j.vals[p] = a * mass_.vals[p] + k_.vals[p] + chi * md_vals[p];
      });
    } else {
      parallel_for(mass_.nnz(), [&](std::size_t p) {
        j.vals[p] = a * mass_.vals[p] + k_.vals[p];
      });
    }
    return j;
  }

  double convexity_timestep_bound(const StateBox& box = {}) const {
    const auto [lo, hi] = model_.di_ion_dv_range(box.vlo, box.vhi, box.wlo, box.whi);
    (void)hi;
    if (lo >= 0.0) return std::numeric_limits<double>::infinity();
    return membrane_.chi * membrane_.cm / std::abs(lo);
  }

  std::unique_ptr<Preconditioner> build_preconditioner() const {
    const double a = membrane_.chi * membrane_.cm / tau_;
    CsrMatrix s = k_;
    for (std::size_t p = 0; p < mass_.nnz(); ++p) s.vals[p] += a * mass_.vals[p];
    const std::array<int, 3> elems = {grid_.nx, grid_.ny, grid_.nz};
    return std::make_unique<GmgHierarchy>(elems, s);
  }

 private:
  void check_state(const Vector& v) const {
    if (v.size() != n_) throw ContractError("MonodomainProblem: state must have N entries");
  }

  StructuredGrid grid_;
  const IonicModel& model_;
  MembraneParams membrane_;
  double tau_;
  Reaction mode_;
  std::size_t n_ = 0;
  CsrMatrix mass_, k_;
  ReactionAssembler reaction_;
  Vector v_prev_, w_;
  Vector b_;
  Vector react_prev_;
};

}  // namespace cardionl
