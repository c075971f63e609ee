#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "cardionl/errors.hpp"

namespace cardionl {

// Membrane model seen by the tissue equations: the ionic current I(v, w),
// its transmembrane derivative, the primitive of I in v (anchored at the
// model's reference potential), and the gating dynamics dw/dt = R(v, w).
//
// Models with one gating variable and no tracked concentrations are what the
// drivers currently support; gating_count() documents the contract.
class IonicModel {
 public:
  virtual ~IonicModel() = default;

  virtual int gating_count() const = 0;

  virtual double i_ion(double v, double w) const = 0;
  virtual double di_ion_dv(double v, double w) const = 0;

  // Primitive of i_ion in v with theta(v_ref, w) = 0.
  virtual double theta(double v, double w) const = 0;
  virtual double v_ref() const = 0;

  virtual double gating_rhs(double v, double w) const = 0;
  virtual double gating_rhs_dw(double v, double w) const = 0;

  // Range of di_ion_dv over the state box [vlo,vhi] x [wlo,whi].
  virtual std::pair<double, double> di_ion_dv_range(double vlo, double vhi, double wlo,
                                                    double whi) const = 0;

  // One backward-Euler gating update with the transmembrane potential frozen:
  // solves w = w_prev + tau R(v_prev, w).  The default runs a scalar Newton
  // iteration; models with a closed-form update override it.
  virtual double gating_update(double v_prev, double w_prev, double tau) const {
    double w = w_prev;
    for (int it = 0; it < 64; ++it) {
      const double g = w - w_prev - tau * gating_rhs(v_prev, w);
      const double dg = 1.0 - tau * gating_rhs_dw(v_prev, w);
      const double dw = g / dg;
      w -= dw;
      if (std::abs(dw) <= 1e-14 * (1.0 + std::abs(w))) return w;
    }
    throw BreakdownError("IonicModel::gating_update: scalar Newton stalled");
  }

  // Gating value at rest, i.e. the root of R(v_ref, w) = 0.  The default
  // runs a scalar Newton iteration starting from zero.
  virtual double gating_rest() const {
    double w = 0.0;
    const double v = v_ref();
    for (int it = 0; it < 64; ++it) {
      const double g = gating_rhs(v, w);
      const double dg = gating_rhs_dw(v, w);
      if (dg == 0.0) break;
      const double dw = g / dg;
      w -= dw;
      if (std::abs(dw) <= 1e-14 * (1.0 + std::abs(w))) return w;
    }
    throw BreakdownError("IonicModel::gating_rest: scalar Newton stalled");
  }
};

// Cubic two-variable membrane model:
//   I(v, w)  = k v (v - a)(v - 1) + w
//   R(v, w)  = eps (gamma v - w)
struct FhnParams {
  double k = 8.0;
  double a = 0.1;
  double eps = 0.01;
  double gamma = 0.5;
  double v_ref = 0.0;

  void check() const {
    if (!(k > 0)) throw ConfigError("FhnParams: k must be positive");
    if (!(eps >= 0)) throw ConfigError("FhnParams: eps must be non-negative");
  }
};

class FitzHughNagumo final : public IonicModel {
 public:
  explicit FitzHughNagumo(FhnParams p = {}) : p_(p) { p_.check(); }

  const FhnParams& params() const { return p_; }

  int gating_count() const override { return 1; }

  double i_ion(double v, double w) const override {
    return p_.k * v * (v - p_.a) * (v - 1.0) + w;
  }

  // d/dv [k v(v-a)(v-1)] = k (3 v^2 - 2(a+1) v + a)
  double di_ion_dv(double v, double /*w*/) const override {
    return p_.k * (3.0 * v * v - 2.0 * (p_.a + 1.0) * v + p_.a);
  }

  double theta(double v, double w) const override {
    return primitive(v) - primitive(p_.v_ref) + w * (v - p_.v_ref);
  }

  double v_ref() const override { return p_.v_ref; }

  double gating_rhs(double v, double w) const override {
    return p_.eps * (p_.gamma * v - w);
  }

  double gating_rhs_dw(double /*v*/, double /*w*/) const override { return -p_.eps; }

  // The derivative is an upward parabola in v with vertex at (a+1)/3 and is
  // independent of w, so the extremes sit at the vertex and the interval ends.
  std::pair<double, double> di_ion_dv_range(double vlo, double vhi, double /*wlo*/,
                                            double /*whi*/) const override {
    if (vlo > vhi) throw ContractError("di_ion_dv_range: empty interval");
    const double vertex = (p_.a + 1.0) / 3.0;
    const double at_lo = di_ion_dv(vlo, 0.0);
    const double at_hi = di_ion_dv(vhi, 0.0);
    double lo = std::min(at_lo, at_hi);
    if (vlo <= vertex && vertex <= vhi) lo = std::min(lo, di_ion_dv(vertex, 0.0));
    return {lo, std::max(at_lo, at_hi)};
  }

  // Backward Euler in w is linear here:
  //   w = (w_prev + tau eps gamma v_prev) / (1 + tau eps)
  double gating_update(double v_prev, double w_prev, double tau) const override {
    return (w_prev + tau * p_.eps * p_.gamma * v_prev) / (1.0 + tau * p_.eps);
  }

  double gating_rest() const override { return p_.gamma * p_.v_ref; }

 private:
  // k (v^4/4 - (a+1) v^3/3 + a v^2/2)
  double primitive(double v) const {
    const double v2 = v * v;
    return p_.k * (0.25 * v2 * v2 - (p_.a + 1.0) / 3.0 * v2 * v + 0.5 * p_.a * v2);
  }

  FhnParams p_;
};

}  // namespace cardionl
