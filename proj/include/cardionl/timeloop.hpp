#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "cardionl/bidomain.hpp"
#include "cardionl/errors.hpp"
#include "cardionl/nonlinear.hpp"
#include "cardionl/parallel.hpp"
#include "cardionl/vector_ops.hpp"

namespace cardionl {

// Nodal indicator of an axis-aligned box (1 inside, 0 outside).
inline Vector nodal_indicator(const StructuredGrid& g, const BoxRegion& box) {
  Vector ind(g.node_count(), 0.0);
  for (int k = 0; k <= g.nz; ++k)
    for (int j = 0; j <= g.ny; ++j)
      for (int i = 0; i <= g.nx; ++i)
        if (box.contains(g.node_position(i, j, k))) ind[g.node_id(i, j, k)] = 1.0;
  return ind;
}

// Transmembrane current pulse on a box of nodes.  The two-potential runs
// drive +amplitude into the intracellular and -amplitude into the
// extracellular compartment on the same nodes, so the compatibility
// condition holds exactly by construction.
struct StimulusSpec {
  BoxRegion box;
  double amplitude = 0.0;  // nodal current density, uA/cm^3
  double duration = 1.0;   // ms, active for step times t <= duration
};

struct StepRecord {
  int step = 0;
  double time = 0.0;
  double seconds = 0.0;
  SolveTrace trace;
};

struct TimeLoopOptions {
  int steps = 0;
  StimulusSpec stim;
  bool store_v = false;
  std::string checkpoint_path;  // empty disables checkpointing
  int checkpoint_every = 0;     // additionally write every k-th step when > 0
};

// ==== Checkpoints ===========================================================
//
// Binary snapshot with a fixed 32-byte header:
//   bytes  0..7   magic "CNLS0001"
//   bytes  8..15  node count (u64)
//   bytes 16..23  step index (u64)
//   bytes 24..31  step time  (f64)
// followed by u_i, u_e, w as f64 arrays of length n each.

struct Checkpoint {
  std::uint64_t step = 0;
  double time = 0.0;
  Vector u;  // stacked (u_i; u_e), 2 n entries
  Vector w;  // n entries
};

inline constexpr char kCheckpointMagic[8] = {'C', 'N', 'L', 'S', '0', '0', '0', '1'};

inline void write_checkpoint(const std::string& path, const Checkpoint& cp) {
  if (cp.u.size() != 2 * cp.w.size())
    throw ContractError("write_checkpoint: state and gating sizes disagree");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_checkpoint: cannot open " + path);
  const std::uint64_t n = cp.w.size();
  out.write(kCheckpointMagic, 8);
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&cp.step), 8);
  out.write(reinterpret_cast<const char*>(&cp.time), 8);
  out.write(reinterpret_cast<const char*>(cp.u.data()),
            static_cast<std::streamsize>(cp.u.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(cp.w.data()),
            static_cast<std::streamsize>(cp.w.size() * sizeof(double)));
  if (!out) throw IoError("write_checkpoint: short write to " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_checkpoint: cannot open " + path);
  char magic[8];
  std::uint64_t n = 0;
  Checkpoint cp;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&n), 8);
  in.read(reinterpret_cast<char*>(&cp.step), 8);
  in.read(reinterpret_cast<char*>(&cp.time), 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("read_checkpoint: " + path + " is not a checkpoint file");
  cp.u.resize(2 * n);
  cp.w.resize(n);
  in.read(reinterpret_cast<char*>(cp.u.data()),
          static_cast<std::streamsize>(cp.u.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(cp.w.data()),
          static_cast<std::streamsize>(cp.w.size() * sizeof(double)));
  if (!in) throw IoError("read_checkpoint: " + path + " is truncated");
  return cp;
}

// ==== Step loops ============================================================

struct BidomainLoopResult {
  std::vector<StepRecord> records;
  bool converged = true;
  Vector u;  // final stacked state
  Vector w;  // final gating field
  std::vector<Vector> v_history;  // per accepted step when store_v is set
};

// Decoupled implicit stepping: advance the gating field with the previous
// potential frozen, then solve the two-potential step problem with the
// previous solution as the warm start.  Stops at the first step whose solve
// does not converge.  `start` resumes from a checkpoint state.
inline BidomainLoopResult run_bidomain_loop(BidomainProblem& prob, const NonlinearSystem& sys,
                                            const NonlinearSolveSpec& spec,
                                            const TimeLoopOptions& opt,
                                            const Checkpoint* start = nullptr) {
  const std::size_t n = prob.node_count();
  const IonicModel& model = prob.model();
  BidomainLoopResult res;
  int first_step = 1;
  if (start != nullptr) {
    if (start->w.size() != n) throw ContractError("run_bidomain_loop: checkpoint size mismatch");
    res.u = start->u;
    res.w = start->w;
    first_step = static_cast<int>(start->step) + 1;
  } else {
    res.u.assign(2 * n, 0.0);
    const double vr = model.v_ref();
    for (std::size_t i = 0; i < n; ++i) res.u[i] = vr;
    res.w.assign(n, model.gating_rest());
  }
  const Vector ind = nodal_indicator(prob.grid(), opt.stim.box);
  Vector iapp_i(n, 0.0), iapp_e(n, 0.0);
  const double tau = prob.tau();

  for (int step = first_step; step <= opt.steps; ++step) {
    const double t = step * tau;
    Vector v_prev = prob.v_of(res.u);
    for (std::size_t i = 0; i < n; ++i)
      res.w[i] = model.gating_update(v_prev[i], res.w[i], tau);
    const double amp = (t <= opt.stim.duration + 1e-12) ? opt.stim.amplitude : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      iapp_i[i] = amp * ind[i];
      iapp_e[i] = -amp * ind[i];
    }
    prob.set_step(std::move(v_prev), res.w, iapp_i, iapp_e);

    const auto t0 = std::chrono::steady_clock::now();
    SolveTrace trace = nonlinear_solve(sys, res.u, spec);
    const auto t1 = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.step = step;
    rec.time = t;
    rec.seconds = std::chrono::duration<double>(t1 - t0).count();
    rec.trace = std::move(trace);
    const bool ok = rec.trace.converged;
    res.records.push_back(std::move(rec));
    if (!ok) {
      res.converged = false;
      break;
    }
    if (opt.store_v) res.v_history.push_back(prob.v_of(res.u));
    if (!opt.checkpoint_path.empty() &&
        ((opt.checkpoint_every > 0 && step % opt.checkpoint_every == 0) || step == opt.steps)) {
      Checkpoint cp;
      cp.step = static_cast<std::uint64_t>(step);
      cp.time = t;
      cp.u = res.u;
      cp.w = res.w;
      write_checkpoint(opt.checkpoint_path, cp);
    }
  }
  return res;
}

struct MonodomainLoopResult {
  std::vector<StepRecord> records;
  bool converged = true;
  Vector v;
  Vector w;
  std::vector<Vector> v_history;
};

inline MonodomainLoopResult run_monodomain_loop(MonodomainProblem& prob,
                                                const NonlinearSystem& sys,
                                                const NonlinearSolveSpec& spec,
                                                const TimeLoopOptions& opt) {
  const std::size_t n = prob.size();
  const IonicModel& model = prob.model();
  MonodomainLoopResult res;
  res.v.assign(n, model.v_ref());
  res.w.assign(n, model.gating_rest());
  const Vector ind = nodal_indicator(prob.grid(), opt.stim.box);
  Vector iapp(n, 0.0);
  const double tau = prob.tau();

  for (int step = 1; step <= opt.steps; ++step) {
    const double t = step * tau;
    Vector v_prev = res.v;
    for (std::size_t i = 0; i < n; ++i)
      res.w[i] = model.gating_update(v_prev[i], res.w[i], tau);
    const double amp = (t <= opt.stim.duration + 1e-12) ? opt.stim.amplitude : 0.0;
    for (std::size_t i = 0; i < n; ++i) iapp[i] = amp * ind[i];
    prob.set_step(std::move(v_prev), res.w, iapp);

    const auto t0 = std::chrono::steady_clock::now();
    SolveTrace trace = nonlinear_solve(sys, res.v, spec);
    const auto t1 = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.step = step;
    rec.time = t;
    rec.seconds = std::chrono::duration<double>(t1 - t0).count();
    rec.trace = std::move(trace);
    const bool ok = rec.trace.converged;
    res.records.push_back(std::move(rec));
    if (!ok) {
      res.converged = false;
      break;
    }
    if (opt.store_v) res.v_history.push_back(res.v);
  }
  return res;
}

// ==== Discrete error norms ==================================================

// Squared H1 norm x^T (M + K_iso) x with a unit isotropic stiffness; used by
// the step-refinement comparisons so the metric is independent of the
// physical conductivities.
class H1Norm {
 public:
  H1Norm(CsrMatrix mass, CsrMatrix stiffness_iso)
      : m_(std::move(mass)), k_(std::move(stiffness_iso)) {
    if (m_.rows != k_.rows) throw ContractError("H1Norm: operator sizes disagree");
  }

  double squared(const Vector& x) const {
    Vector tmp;
    m_.mult(x, tmp);
    double s = dot(x, tmp);
    k_.mult(x, tmp);
    return s + dot(x, tmp);
  }

  double norm(const Vector& x) const { return std::sqrt(squared(x)); }

 private:
  CsrMatrix m_, k_;
};

// Relative space-time error  sqrt(sum_n tau |v_n - r_n|_H1^2) /
// sqrt(sum_n tau |r_n|_H1^2) over matching sample times.  `stride` picks
// every stride-th entry of the reference history (reference computed with a
// step size tau/stride).
inline double bochner_relative_error(double tau, const std::vector<Vector>& coarse,
                                     const std::vector<Vector>& reference, std::size_t stride,
                                     const H1Norm& h1) {
  if (stride == 0 || coarse.empty() || reference.size() < stride * coarse.size())
    throw ContractError("bochner_relative_error: histories do not align");
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const Vector& r = reference[stride * (i + 1) - 1];
    Vector d = coarse[i];
    axpy(-1.0, r, d);
    err += tau * h1.squared(d);
    ref += tau * h1.squared(r);
  }
  if (ref == 0.0) throw ContractError("bochner_relative_error: zero reference norm");
  return std::sqrt(err / ref);
}

}  // namespace cardionl
