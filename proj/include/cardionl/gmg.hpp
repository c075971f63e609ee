#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "cardionl/csr.hpp"
#include "cardionl/dense.hpp"
#include "cardionl/errors.hpp"
#include "cardionl/linear_solve.hpp"

namespace cardionl {

struct GmgOptions {
  int nu_pre = 2;
  int nu_post = 2;
  // Damped-Jacobi weight as a fraction of 2/lambda_max(D^-1 A), so the
  // smoother is contractive on every operator; lambda_max is estimated per
  // level by power iteration.  2/3 reproduces the classical weight on
  // operators with lambda_max = 2 and keeps mass-dominated and coupled
  // operators safe.
  double omega = 2.0 / 3.0;
  std::size_t coarse_limit = 300;  // keep coarsening while nodes exceed this
  std::size_t coarse_cap = 4096;   // refuse a direct solve larger than this
  // For operators with the constant vector (approximately) in the null
  // space: adds a rank-one constant shift to the coarsest matrix so the
  // direct factorization exists; on compatible right-hand sides the shifted
  // solve agrees with the pseudo-inverse.
  bool regularize_nullspace = false;
  // Unknowns per grid node, stored field-major: x = (x_0; ...; x_{f-1}) with
  // each block ordered like the scalar grid.  Interpolation acts per field.
  int fields = 1;
};

// Geometric multigrid V-cycle on a structured vertex grid.
//
// Coarse operators are Galerkin products A_c = P^T A P with trilinear
// interpolation P; coarsening halves the element count per axis and stops
// when a count turns odd or the level is small enough for a direct solve.
// With equal pre/post damped-Jacobi sweeps the cycle is a symmetric
// operator, so it is admissible as a CG preconditioner.
class GmgHierarchy final : public Preconditioner {
 public:
  GmgHierarchy(std::array<int, 3> elems, const CsrMatrix& fine, GmgOptions opts = {})
      : opts_(opts) {
    if (opts_.fields < 1) throw ConfigError("GmgHierarchy: fields must be >= 1");
    const std::size_t n = node_count(elems) * static_cast<std::size_t>(opts_.fields);
    if (fine.rows != n || fine.cols != n)
      throw ContractError("GmgHierarchy: matrix size does not match grid");
    levels_.push_back(Level{fine, {}, {}, {}, {}, elems});
    while (can_coarsen(levels_.back().elems) &&
           node_count(levels_.back().elems) > opts_.coarse_limit) {
      const std::array<int, 3> ce = {levels_.back().elems[0] / 2, levels_.back().elems[1] / 2,
                                     levels_.back().elems[2] / 2};
      CsrMatrix p = build_prolongation(ce, levels_.back().elems);
      if (opts_.fields > 1) p = block_expand(p, opts_.fields);
      CsrMatrix r = csr_transpose(p);
      CsrMatrix ac = csr_matmul(r, csr_matmul(levels_.back().a, p));
      levels_.back().p = std::move(p);
      levels_.back().r = std::move(r);
      levels_.push_back(Level{{}, {}, {}, {}, {}, ce});
      levels_.back().a = std::move(ac);
    }
    if (node_count(levels_.back().elems) > opts_.coarse_cap)
      throw ConfigError("GmgHierarchy: coarsest level has " +
                        std::to_string(node_count(levels_.back().elems)) +
                        " nodes, beyond the direct-solve cap; grid does not coarsen");
    for (Level& l : levels_) {
      if (opts_.fields == 1) {
        l.inv_diag = l.a.diagonal();
        for (double& d : l.inv_diag) {
          if (d == 0.0) throw ContractError("GmgHierarchy: zero diagonal on a level");
          d = 1.0 / d;
        }
      } else {
        build_block_inverse(l, opts_.fields);
      }
      l.omega = opts_.omega * 2.0 / jacobi_lambda_max(l, opts_.fields);
    }
    DenseMatrix cd = DenseMatrix::from_csr(levels_.back().a);
    if (opts_.regularize_nullspace) {
      const std::size_t nc = cd.rows();
      double beta = 0.0;
      for (std::size_t i = 0; i < nc; ++i) beta += std::abs(cd(i, i));
      beta /= static_cast<double>(nc);
      const double shift = beta / static_cast<double>(nc);
      for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t j = 0; j < nc; ++j) cd(i, j) += shift;
    }
    coarse_ = std::make_unique<CholeskyFactor>(cd);
  }

  int level_count() const { return static_cast<int>(levels_.size()); }

  const CsrMatrix& level_matrix(int l) const { return levels_[static_cast<std::size_t>(l)].a; }
  const CsrMatrix& prolongation(int l) const { return levels_[static_cast<std::size_t>(l)].p; }

  // One V-cycle applied to r with zero initial guess.
  void apply(const Vector& r, Vector& z) const override {
    z.assign(r.size(), 0.0);
    cycle(0, r, z);
  }

 private:
  struct Level {
    CsrMatrix a;
    CsrMatrix p;  // prolongation from the next-coarser level (empty on coarsest)
    CsrMatrix r;  // cached restriction P^T
    Vector inv_diag;  // fields == 1: reciprocal diagonal
    Vector inv_blk;   // fields > 1: per-node inverse of the fields x fields
                      // node block, row-major; field f of node i sits at
                      // index i + f * nodes in the level vectors
    std::array<int, 3> elems;
    double omega = 0.0;
  };

  // In-place Gauss-Jordan inverse of a small dense block (partial pivoting).
  static void invert_small(std::vector<double>& m, std::vector<double>& inv, std::size_t f) {
    inv.assign(f * f, 0.0);
    for (std::size_t i = 0; i < f; ++i) inv[i * f + i] = 1.0;
    for (std::size_t col = 0; col < f; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < f; ++r)
        if (std::abs(m[r * f + col]) > std::abs(m[piv * f + col])) piv = r;
      if (m[piv * f + col] == 0.0)
        throw ContractError("GmgHierarchy: singular node block on a level");
      if (piv != col)
        for (std::size_t c = 0; c < f; ++c) {
          std::swap(m[piv * f + c], m[col * f + c]);
          std::swap(inv[piv * f + c], inv[col * f + c]);
        }
      const double d = 1.0 / m[col * f + col];
      for (std::size_t c = 0; c < f; ++c) {
        m[col * f + c] *= d;
        inv[col * f + c] *= d;
      }
      for (std::size_t r = 0; r < f; ++r) {
        if (r == col) continue;
        const double t = m[r * f + col];
        if (t == 0.0) continue;
        for (std::size_t c = 0; c < f; ++c) {
          m[r * f + c] -= t * m[col * f + c];
          inv[r * f + c] -= t * inv[col * f + c];
        }
      }
    }
  }

  // Inverse of each node's fields x fields diagonal block.  The couplings
  // between one node's fields dominate those rows and cancel on modes where
  // the fields move together, so a scalar diagonal leaves such modes almost
  // untouched; scaling by the block inverse keeps the smoother uniformly
  // effective and the cycle quality independent of the grid size.
  static void build_block_inverse(Level& l, int fields) {
    const std::size_t f = static_cast<std::size_t>(fields);
    const std::size_t nn = l.a.rows / f;
    l.inv_blk.assign(nn * f * f, 0.0);
    std::vector<double> blk(f * f), inv(f * f);
    for (std::size_t i = 0; i < nn; ++i) {
      for (std::size_t r = 0; r < f; ++r)
        for (std::size_t c = 0; c < f; ++c)
          blk[r * f + c] = l.a.value_at(i + r * nn, i + c * nn);
      invert_small(blk, inv, f);
      std::copy(inv.begin(), inv.end(),
                l.inv_blk.begin() + static_cast<std::ptrdiff_t>(i * f * f));
    }
  }

  // Largest eigenvalue of B^-1 A by power iteration, where B is the (block)
  // diagonal (B^-1 A is similar to the symmetric B^-1/2 A B^-1/2, so the
  // dominant eigenvalue is real).
  static double jacobi_lambda_max(const Level& l, int fields) {
    const std::size_t n = l.a.rows;
    const std::size_t f = static_cast<std::size_t>(fields);
    const std::size_t nn = n / f;
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i)
      v[i] = 0.5 + 0.5 * std::cos(static_cast<double>(3 * i + 1));
    double lambda = 1.0;
    Vector av(n), bv(n);
    for (int it = 0; it < 30; ++it) {
      const double nv = nrm2(v);
      if (!(nv > 0.0)) break;
      scal(1.0 / nv, v);
      l.a.mult(v, av);
      if (f == 1) {
        parallel_for(n, [&](std::size_t i) { av[i] *= l.inv_diag[i]; });
      } else {
        parallel_for(nn, [&](std::size_t i) {
          const double* m = l.inv_blk.data() + i * f * f;
          for (std::size_t r = 0; r < f; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < f; ++c) acc += m[r * f + c] * av[i + c * nn];
            bv[i + r * nn] = acc;
          }
        });
        av.swap(bv);
      }
      lambda = std::max(std::abs(dot(v, av)), 1e-300);
      v.swap(av);
    }
    // Safety margin: power iteration approaches lambda_max from below.
    return 1.1 * lambda;
  }

  static std::size_t node_count(const std::array<int, 3>& e) {
    return static_cast<std::size_t>(e[0] + 1) * (e[1] + 1) * (e[2] + 1);
  }

  static bool can_coarsen(const std::array<int, 3>& e) {
    return e[0] % 2 == 0 && e[1] % 2 == 0 && e[2] % 2 == 0 && e[0] > 1 && e[1] > 1 && e[2] > 1;
  }

  // Trilinear interpolation: coincident nodes copy, edge/face/cell midpoints
  // average 2/4/8 coarse neighbors.  Column indices come out ordered because
  // coarse node ids increase with (i,j,k) in the loop order used.
  static CsrMatrix build_prolongation(const std::array<int, 3>& ce, const std::array<int, 3>& fe) {
    const int cnx = ce[0] + 1, cny = ce[1] + 1, cnz = ce[2] + 1;
    const int fnx = fe[0] + 1, fny = fe[1] + 1, fnz = fe[2] + 1;
    auto cid = [&](int i, int j, int k) {
      return static_cast<std::size_t>(i) +
             static_cast<std::size_t>(cnx) * (static_cast<std::size_t>(j) +
                                              static_cast<std::size_t>(cny) * k);
    };
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(fnx) * fny * fnz * 4);
    std::size_t fid = 0;
    for (int k = 0; k < fnz; ++k)
      for (int j = 0; j < fny; ++j)
        for (int i = 0; i < fnx; ++i, ++fid) {
          const std::array<std::pair<int, double>, 2> wx = axis_weights(i);
          const std::array<std::pair<int, double>, 2> wy = axis_weights(j);
          const std::array<std::pair<int, double>, 2> wz = axis_weights(k);
          for (const auto& [kz, vz] : wz) {
            if (vz == 0.0) continue;
            for (const auto& [ky, vy] : wy) {
              if (vy == 0.0) continue;
              for (const auto& [kx, vx] : wx) {
                if (vx == 0.0) continue;
                trips.push_back({fid, cid(kx, ky, kz), vx * vy * vz});
              }
            }
          }
        }
    return csr_from_triplets(static_cast<std::size_t>(fnx) * fny * fnz,
                             static_cast<std::size_t>(cnx) * cny * cnz, std::move(trips));
  }

  static std::array<std::pair<int, double>, 2> axis_weights(int fine_index) {
    if (fine_index % 2 == 0) return {{{fine_index / 2, 1.0}, {0, 0.0}}};
    return {{{fine_index / 2, 0.5}, {fine_index / 2 + 1, 0.5}}};
  }

  // blkdiag(p, ..., p): the same interpolation applied to each field block.
  static CsrMatrix block_expand(const CsrMatrix& p, int fields) {
    std::vector<Triplet> trips;
    trips.reserve(p.nnz() * static_cast<std::size_t>(fields));
    for (int f = 0; f < fields; ++f) {
      const std::size_t ro = static_cast<std::size_t>(f) * p.rows;
      const std::size_t co = static_cast<std::size_t>(f) * p.cols;
      for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t q = p.row_ptr[i]; q < p.row_ptr[i + 1]; ++q)
          trips.push_back({ro + i, co + p.col_idx[q], p.vals[q]});
    }
    return csr_from_triplets(p.rows * static_cast<std::size_t>(fields),
                             p.cols * static_cast<std::size_t>(fields), std::move(trips));
  }

  void smooth(const Level& l, const Vector& b, Vector& x, int sweeps) const {
    Vector ax(b.size());
    const std::size_t f = static_cast<std::size_t>(opts_.fields);
    const std::size_t nn = b.size() / f;
    for (int s = 0; s < sweeps; ++s) {
      l.a.mult(x, ax);
      if (f == 1) {
        parallel_for(b.size(), [&](std::size_t i) {
          x[i] += l.omega * l.inv_diag[i] * (b[i] - ax[i]);
        });
      } else {
        parallel_for(nn, [&](std::size_t i) {
          const double* m = l.inv_blk.data() + i * f * f;
          for (std::size_t r = 0; r < f; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < f; ++c)
              acc += m[r * f + c] * (b[i + c * nn] - ax[i + c * nn]);
            x[i + r * nn] += l.omega * acc;
          }
        });
      }
    }
  }

  void cycle(std::size_t lev, const Vector& b, Vector& x) const {
    const Level& l = levels_[lev];
    if (lev + 1 == levels_.size()) {
      x = coarse_->solve(b);
      return;
    }
    smooth(l, b, x, opts_.nu_pre);
    Vector r = l.a.mult(x);
    axpby(1.0, b, -1.0, r);
    Vector rc = l.r.mult(r);
    Vector xc(rc.size(), 0.0);
    cycle(lev + 1, rc, xc);
    Vector px = l.p.mult(xc);
    axpy(1.0, px, x);
    smooth(l, b, x, opts_.nu_post);
  }

  GmgOptions opts_;
  std::vector<Level> levels_;
  std::unique_ptr<CholeskyFactor> coarse_;
};

// Applies one preconditioner per contiguous sub-block of equal size.
class BlockDiagPc final : public Preconditioner {
 public:
  BlockDiagPc(const Preconditioner& first, const Preconditioner& second, std::size_t block)
      : first_(first), second_(second), block_(block) {}

  void apply(const Vector& r, Vector& z) const override {
    if (r.size() != 2 * block_) throw ContractError("BlockDiagPc: size mismatch");
    Vector rb(block_), zb;
    z.resize(r.size());
    std::copy(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(block_), rb.begin());
    first_.apply(rb, zb);
    std::copy(zb.begin(), zb.end(), z.begin());
    std::copy(r.begin() + static_cast<std::ptrdiff_t>(block_), r.end(), rb.begin());
    second_.apply(rb, zb);
    std::copy(zb.begin(), zb.end(), z.begin() + static_cast<std::ptrdiff_t>(block_));
  }

 private:
  const Preconditioner& first_;
  const Preconditioner& second_;
  std::size_t block_;
};

}  // namespace cardionl
