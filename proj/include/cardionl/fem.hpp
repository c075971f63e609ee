#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "cardionl/csr.hpp"
#include "cardionl/grid.hpp"

namespace cardionl {

// ==== Q1 reference element ==================================================
//
// Trilinear shape functions on [-1,1]^3 in the tensor-product node order
// (x fastest):  N_a = (1 + xi xi_a)(1 + eta eta_a)(1 + zeta zeta_a) / 8.
// Quadrature is the 2x2x2 Gauss rule (points +-1/sqrt(3), unit weights),
// which integrates products of two trilinear functions exactly.

struct Q1Reference {
  static constexpr int kNodes = 8;
  static constexpr int kQuad = 8;

  // shape[q][a], grad[q][a][d]: values at quadrature point q, reference frame
  double shape[kQuad][kNodes];
  double grad[kQuad][kNodes][3];

  Q1Reference() {
    const double gp = 1.0 / std::sqrt(3.0);
    int q = 0;
    for (int qk = 0; qk <= 1; ++qk)
      for (int qj = 0; qj <= 1; ++qj)
        for (int qi = 0; qi <= 1; ++qi, ++q) {
          const double xi = (qi == 0 ? -gp : gp);
          const double eta = (qj == 0 ? -gp : gp);
          const double zeta = (qk == 0 ? -gp : gp);
          int a = 0;
          for (int ak = 0; ak <= 1; ++ak)
            for (int aj = 0; aj <= 1; ++aj)
              for (int ai = 0; ai <= 1; ++ai, ++a) {
                const double sx = (ai == 0 ? -1.0 : 1.0);
                const double sy = (aj == 0 ? -1.0 : 1.0);
                const double sz = (ak == 0 ? -1.0 : 1.0);
                const double fx = 1.0 + sx * xi;
                const double fy = 1.0 + sy * eta;
                const double fz = 1.0 + sz * zeta;
                shape[q][a] = 0.125 * fx * fy * fz;
                grad[q][a][0] = 0.125 * sx * fy * fz;
                grad[q][a][1] = 0.125 * fx * sy * fz;
                grad[q][a][2] = 0.125 * fx * fy * sz;
              }
        }
  }

  static const Q1Reference& get() {
    static const Q1Reference ref;
    return ref;
  }
};

// ==== Element matrices ======================================================

// Consistent mass on one element of size hx*hy*hz (diagonal 27-point values
// follow from the 1D pattern h/6 * [2 1; 1 2] per axis).
inline std::array<double, 64> element_mass(double hx, double hy, double hz) {
  const Q1Reference& ref = Q1Reference::get();
  const double wdet = hx * hy * hz / 8.0;  // unit Gauss weights x |J|
  std::array<double, 64> m{};
  for (int q = 0; q < 8; ++q)
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) m[static_cast<std::size_t>(8 * a + b)] += wdet * ref.shape[q][a] * ref.shape[q][b];
  return m;
}

// Stiffness with a constant 3x3 conductivity tensor d (row-major).
inline std::array<double, 64> element_stiffness(double hx, double hy, double hz,
                                                const std::array<double, 9>& d) {
  const Q1Reference& ref = Q1Reference::get();
  const double wdet = hx * hy * hz / 8.0;
  const double inv[3] = {2.0 / hx, 2.0 / hy, 2.0 / hz};  // J^-T is diagonal
  std::array<double, 64> k{};
  for (int q = 0; q < 8; ++q) {
    double g[8][3];
    for (int a = 0; a < 8; ++a)
      for (int dd = 0; dd < 3; ++dd) g[a][dd] = ref.grad[q][a][dd] * inv[dd];
    for (int a = 0; a < 8; ++a) {
      double dg[3] = {0, 0, 0};
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) dg[r] += d[static_cast<std::size_t>(3 * r + c)] * g[a][c];
      for (int b = 0; b < 8; ++b) {
        double s = 0.0;
        for (int r = 0; r < 3; ++r) s += dg[r] * g[b][r];
        k[static_cast<std::size_t>(8 * a + b)] += wdet * s;
      }
    }
  }
  return k;
}

// ==== Global assembly =======================================================

namespace detail {

inline CsrMatrix assemble_element_sum(const StructuredGrid& g,
                                      const std::function<const double*(std::size_t)>& elem) {
  const std::size_t n = g.node_count();
  std::vector<Triplet> trips;
  trips.reserve(g.element_count() * 64);
  std::size_t e = 0;
  for (int ek = 0; ek < g.nz; ++ek)
    for (int ej = 0; ej < g.ny; ++ej)
      for (int ei = 0; ei < g.nx; ++ei, ++e) {
        const std::array<std::size_t, 8> nodes = g.element_nodes(ei, ej, ek);
        const double* m = elem(e);
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b)
            trips.push_back({nodes[static_cast<std::size_t>(a)],
                             nodes[static_cast<std::size_t>(b)],
                             m[8 * a + b]});
      }
  return csr_from_triplets(n, n, std::move(trips));
}

}  // namespace detail

inline CsrMatrix assemble_mass(const StructuredGrid& g) {
  const std::array<double, 64> m = element_mass(g.hx, g.hy, g.hz);
  return detail::assemble_element_sum(g, [&](std::size_t) { return m.data(); });
}

// Stiffness with per-element conductivity tensors from the fiber frame and an
// optional ischemic scaling.
inline CsrMatrix assemble_stiffness(const StructuredGrid& g, const Conductivity& sigma,
                                    const FiberField& fibers,
                                    const IschemicRegion& ischemia = {}) {
  sigma.check();
  if (fibers.size() != g.element_count())
    throw ContractError("assemble_stiffness: fiber field size mismatch");
  std::vector<std::array<double, 64>> mats(g.element_count());
  std::size_t e = 0;
  for (int ek = 0; ek < g.nz; ++ek)
    for (int ej = 0; ej < g.ny; ++ej)
      for (int ei = 0; ei < g.nx; ++ei, ++e) {
        std::array<double, 9> d = conductivity_tensor(sigma, fibers[e]);
        const double f = ischemia.factor(g.element_center(ei, ej, ek));
        for (double& v : d) v *= f;
        mats[e] = element_stiffness(g.hx, g.hy, g.hz, d);
      }
  return detail::assemble_element_sum(g, [&](std::size_t i) { return mats[i].data(); });
}

// Isotropic unit-coefficient stiffness, used for H1-norm evaluations.
inline CsrMatrix assemble_stiffness_iso(const StructuredGrid& g, double coeff = 1.0) {
  const std::array<double, 9> d = {coeff, 0, 0, 0, coeff, 0, 0, 0, coeff};
  const std::array<double, 64> k = element_stiffness(g.hx, g.hy, g.hz, d);
  return detail::assemble_element_sum(g, [&](std::size_t) { return k.data(); });
}

// Nodal volumes (row sums of the consistent mass; they partition |Omega|).
inline Vector lumped_mass(const CsrMatrix& mass) {
  Vector s(mass.rows, 0.0);
  for (std::size_t r = 0; r < mass.rows; ++r)
    for (std::size_t p = mass.row_ptr[r]; p < mass.row_ptr[r + 1]; ++p) s[r] += mass.vals[p];
  return s;
}

}  // namespace cardionl
