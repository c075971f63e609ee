#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cardionl/errors.hpp"

namespace cardionl {

// Structured grid of trilinear hexahedra on an axis-aligned box.
// Nodes are numbered lexicographically with x fastest, then y, then z.
struct StructuredGrid {
  int nx = 0, ny = 0, nz = 0;   // element counts per axis
  double hx = 0, hy = 0, hz = 0;  // element spacings

  StructuredGrid() = default;
  StructuredGrid(int ex, int ey, int ez, double sx, double sy, double sz)
      : nx(ex), ny(ey), nz(ez), hx(sx), hy(sy), hz(sz) {
    if (nx < 1 || ny < 1 || nz < 1)
      throw ConfigError("StructuredGrid: element counts must be positive");
    if (!(hx > 0) || !(hy > 0) || !(hz > 0))
      throw ConfigError("StructuredGrid: spacings must be positive");
  }

  std::size_t node_count() const {
    return static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1);
  }
  std::size_t element_count() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }

  std::size_t node_id(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(nx + 1) * (static_cast<std::size_t>(j) +
                                               static_cast<std::size_t>(ny + 1) * k);
  }

  std::array<double, 3> node_coord(int i, int j, int k) const {
    return {i * hx, j * hy, k * hz};
  }

  // Corner nodes of element (ei,ej,ek) in the tensor-product order
  // (x fastest): 000,100,010,110,001,101,011,111.
  std::array<std::size_t, 8> element_nodes(int ei, int ej, int ek) const {
    std::array<std::size_t, 8> n;
    int q = 0;
    for (int dk = 0; dk <= 1; ++dk)
      for (int dj = 0; dj <= 1; ++dj)
        for (int di = 0; di <= 1; ++di) n[q++] = node_id(ei + di, ej + dj, ek + dk);
    return n;
  }

  std::array<double, 3> element_center(int ei, int ej, int ek) const {
    return {(ei + 0.5) * hx, (ej + 0.5) * hy, (ek + 0.5) * hz};
  }

  std::array<double, 3> node_position(int i, int j, int k) const {
    return {i * hx, j * hy, k * hz};
  }

  std::array<double, 3> extent() const { return {nx * hx, ny * hy, nz * hz}; }
};

// Orthonormal fiber frame per element: longitudinal, transverse, normal.
struct FiberFrame {
  std::array<double, 3> l, t, n;
};

using FiberField = std::vector<FiberFrame>;

// In-plane fiber rotation, linear in element-center depth from angle_endo at
// z = 0 to angle_epi at z = Lz.  The sheet-normal direction stays +z.
inline FiberField rotated_fibers(const StructuredGrid& g, double angle_endo, double angle_epi) {
  FiberField field(g.element_count());
  const double lz = g.nz * g.hz;
  std::size_t e = 0;
  for (int ek = 0; ek < g.nz; ++ek)
    for (int ej = 0; ej < g.ny; ++ej)
      for (int ei = 0; ei < g.nx; ++ei, ++e) {
        const double zeta = g.element_center(ei, ej, ek)[2] / lz;
        const double th = angle_endo + (angle_epi - angle_endo) * zeta;
        field[e].l = {std::cos(th), std::sin(th), 0.0};
        field[e].t = {-std::sin(th), std::cos(th), 0.0};
        field[e].n = {0.0, 0.0, 1.0};
      }
  return field;
}

// Conductivities along the fiber frame, one triple per compartment.
// Values are in Ohm^-1 cm^-1; sigma_n defaults to sigma_t when negative.
struct Conductivity {
  double l = 0, t = 0, n = -1;

  double normal() const { return n < 0 ? t : n; }

  void check() const {
    if (l < 0 || t < 0)
      throw ConfigError("Conductivity: coefficients must be non-negative");
  }
};

// 3x3 symmetric tensor sigma_l l l^T + sigma_t t t^T + sigma_n n n^T.
inline std::array<double, 9> conductivity_tensor(const Conductivity& s, const FiberFrame& f) {
  std::array<double, 9> d{};
  const double sn = s.normal();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      d[static_cast<std::size_t>(3 * r + c)] =
          s.l * f.l[r] * f.l[c] + s.t * f.t[r] * f.t[c] + sn * f.n[r] * f.n[c];
  return d;
}

// Axis-aligned box predicate; element membership is decided by its center.
struct BoxRegion {
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};

  bool contains(const std::array<double, 3>& p) const {
    for (int d = 0; d < 3; ++d)
      if (p[d] < lo[d] || p[d] > hi[d]) return false;
    return true;
  }
};

// Per-element conductivity scale inside a box region (0.5 models the
// reduced-coupling patch used by the robustness studies).
struct IschemicRegion {
  bool enabled = false;
  BoxRegion box;
  double scale = 0.5;

  double factor(const std::array<double, 3>& center) const {
    return (enabled && box.contains(center)) ? scale : 1.0;
  }
};

}  // namespace cardionl
