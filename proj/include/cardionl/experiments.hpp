#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cardionl/bidomain.hpp"
#include "cardionl/config.hpp"
#include "cardionl/csv.hpp"
#include "cardionl/errors.hpp"
#include "cardionl/fem.hpp"
#include "cardionl/nonlinear.hpp"
#include "cardionl/step_system.hpp"
#include "cardionl/svg.hpp"
#include "cardionl/timeloop.hpp"

namespace cardionl {

// ==== Problem setup from configuration ======================================

struct SetupOptions {
  int n = 16;        // elements per axis (cube)
  double h = 0.025;  // mesh size, cm
  double tau = 0.05; // step size, ms
  double t_end = 2.0;
  MembraneParams membrane{1000.0, 1.0};
  FhnParams fhn{};
  Conductivity sigma_i{3.0e-3, 3.1525e-4};
  Conductivity sigma_e{2.0e-3, 1.3514e-3};
  double angle_endo_deg = -60.0, angle_epi_deg = 60.0;
  IschemicRegion ischemia{};
  StimulusSpec stim{BoxRegion{{0, 0, 0}, {0.1, 0.1, 0.1}}, 1000.0, 1.0};
  std::string checkpoint_path;
  int checkpoint_every = 0;

  int steps() const {
    const int s = static_cast<int>(std::llround(t_end / tau));
    if (s < 1) throw ConfigError("setup: t_end must cover at least one step");
    return s;
  }

  static SetupOptions from_config(const Config& c) {
    SetupOptions o;
    o.n = c.get_int("grid.n", o.n);
    o.h = c.get_double("grid.h", o.h);
    o.tau = c.get_double("time.tau", o.tau);
    o.t_end = c.get_double("time.t_end", o.t_end);
    o.membrane.chi = c.get_double("membrane.chi", o.membrane.chi);
    o.membrane.cm = c.get_double("membrane.cm", o.membrane.cm);
    o.fhn.k = c.get_double("ionic.k", o.fhn.k);
    o.fhn.a = c.get_double("ionic.a", o.fhn.a);
    o.fhn.eps = c.get_double("ionic.eps", o.fhn.eps);
    o.fhn.gamma = c.get_double("ionic.gamma", o.fhn.gamma);
    o.fhn.v_ref = c.get_double("ionic.v_ref", o.fhn.v_ref);
    o.sigma_i.l = c.get_double("sigma.i.l", o.sigma_i.l);
    o.sigma_i.t = c.get_double("sigma.i.t", o.sigma_i.t);
    o.sigma_i.n = c.get_double("sigma.i.n", o.sigma_i.n);
    o.sigma_e.l = c.get_double("sigma.e.l", o.sigma_e.l);
    o.sigma_e.t = c.get_double("sigma.e.t", o.sigma_e.t);
    o.sigma_e.n = c.get_double("sigma.e.n", o.sigma_e.n);
    o.angle_endo_deg = c.get_double("fibers.angle_endo_deg", o.angle_endo_deg);
    o.angle_epi_deg = c.get_double("fibers.angle_epi_deg", o.angle_epi_deg);
    o.ischemia.enabled = c.get_bool("ischemia.enabled", o.ischemia.enabled);
    o.ischemia.scale = c.get_double("ischemia.scale", o.ischemia.scale);
    {
      const std::array<double, 3> ext = {o.n * o.h, o.n * o.h, o.n * o.h};
      std::vector<double> lo = c.get_list("ischemia.box.lo",
                                          {0.125 * ext[0], 0.125 * ext[1], 0.125 * ext[2]});
      std::vector<double> hi = c.get_list("ischemia.box.hi",
                                          {0.625 * ext[0], 0.625 * ext[1], 0.625 * ext[2]});
      if (lo.size() != 3 || hi.size() != 3)
        throw ConfigError("setup: ischemia.box.lo/hi expect three numbers");
      o.ischemia.box.lo = {lo[0], lo[1], lo[2]};
      o.ischemia.box.hi = {hi[0], hi[1], hi[2]};
    }
    {
      std::vector<double> lo = c.get_list("stim.box.lo", {0, 0, 0});
      std::vector<double> hi = c.get_list("stim.box.hi", {0.1, 0.1, 0.1});
      if (lo.size() != 3 || hi.size() != 3)
        throw ConfigError("setup: stim.box.lo/hi expect three numbers");
      o.stim.box.lo = {lo[0], lo[1], lo[2]};
      o.stim.box.hi = {hi[0], hi[1], hi[2]};
    }
    o.stim.amplitude = c.get_double("stim.amplitude", o.stim.amplitude);
    o.stim.duration = c.get_double("stim.duration", o.stim.duration);
    o.checkpoint_path = c.get_string("checkpoint.path", o.checkpoint_path);
    o.checkpoint_every = c.get_int("checkpoint.every", o.checkpoint_every);
    if (o.n < 2) throw ConfigError("setup: grid.n must be at least 2");
    if (!(o.h > 0) || !(o.tau > 0)) throw ConfigError("setup: grid.h and time.tau must be positive");
    return o;
  }

  MetaList meta() const {
    MetaList m;
    m.push_back({"grid", std::to_string(n) + "x" + std::to_string(n) + "x" + std::to_string(n)});
    m.push_back({"h", format_double(h)});
    m.push_back({"tau", format_double(tau)});
    m.push_back({"t_end", format_double(t_end)});
    m.push_back({"chi", format_double(membrane.chi)});
    m.push_back({"cm", format_double(membrane.cm)});
    return m;
  }
};

inline NlMethod method_from_string(const std::string& s) {
  if (s == "newton") return NlMethod::newton;
  if (s == "inewton") return NlMethod::inewton;
  if (s == "qn") return NlMethod::qn;
  if (s == "ngmres") return NlMethod::ngmres;
  if (s == "ncg") return NlMethod::ncg;
  throw ConfigError("solver.type '" + s + "' is not one of newton, inewton, qn, ngmres, ncg");
}

inline NcgBeta ncg_beta_from_string(const std::string& s) {
  if (s == "fr") return NcgBeta::fr;
  if (s == "prp") return NcgBeta::prp;
  if (s == "dy") return NcgBeta::dy;
  if (s == "cd") return NcgBeta::cd;
  throw ConfigError("solver.ncg_beta '" + s + "' is not one of fr, prp, dy, cd");
}

inline std::string ncg_beta_name(NcgBeta b) {
  switch (b) {
    case NcgBeta::fr:
      return "fr";
    case NcgBeta::prp:
      return "prp";
    case NcgBeta::dy:
      return "dy";
    case NcgBeta::cd:
      return "cd";
  }
  return "fr";
}

inline QnInitial qn_initial_from_string(const std::string& s) {
  if (s == "preonly") return QnInitial::preonly;
  if (s == "jaclow") return QnInitial::jaclow;
  throw ConfigError("solver.qn_initial '" + s + "' is not one of preonly, jaclow");
}

inline NonlinearSolveSpec solver_spec_from_config(const Config& c) {
  NonlinearSolveSpec s;
  s.method = method_from_string(c.get_string("solver.type", "newton"));
  s.atol = c.get_double("solver.atol", s.atol);
  s.rtol = c.get_double("solver.rtol", s.rtol);
  s.stol = c.get_double("solver.stol", s.stol);
  s.max_it = c.get_int("solver.max_it", s.max_it);
  s.lin_rtol = c.get_double("solver.lin_rtol", s.lin_rtol);
  s.lin_max_it = c.get_int("solver.lin_max_it", s.lin_max_it);
  s.ew_rtol0 = c.get_double("solver.ew_rtol0", s.ew_rtol0);
  s.qn_m = c.get_int("solver.qn_m", s.qn_m);
  s.qn_initial = qn_initial_from_string(
      c.get_string("solver.qn_initial", s.qn_initial == QnInitial::preonly ? "preonly" : "jaclow"));
  s.qn_jaclow_its = c.get_int("solver.jaclow_its", s.qn_jaclow_its);
  s.ngmres_m = c.get_int("solver.ngmres_m", s.ngmres_m);
  s.ncg_beta = ncg_beta_from_string(c.get_string("solver.ncg_beta", ncg_beta_name(s.ncg_beta)));
  s.check();
  return s;
}

inline std::string solver_label(const NonlinearSolveSpec& s) {
  switch (s.method) {
    case NlMethod::newton:
      return "newton";
    case NlMethod::inewton:
      return "inewton-" + format_double(s.ew_rtol0);
    case NlMethod::qn:
      return std::string("qn-") +
             (s.qn_initial == QnInitial::preonly ? "preonly" : "jaclow") + "-" +
             std::to_string(s.qn_m);
    case NlMethod::ngmres:
      return "ngmres-" + std::to_string(s.ngmres_m);
    case NlMethod::ncg:
      return "ncg-" + ncg_beta_name(s.ncg_beta);
  }
  return "unknown";
}

// ==== Bench harness =========================================================

// Assembled two-potential problem plus its solver adapter; reusable across
// solver variants at one setup.
class BidomainBench {
 public:
  explicit BidomainBench(const SetupOptions& o)
      : o_(o),
        grid_(o.n, o.n, o.n, o.h, o.h, o.h),
        model_(o.fhn),
        fibers_(rotated_fibers(grid_, o.angle_endo_deg * kDeg, o.angle_epi_deg * kDeg)) {
    CsrMatrix m = assemble_mass(grid_);
    // The reduced-conductivity patch affects the intracellular compartment only.
    CsrMatrix ki = assemble_stiffness(grid_, o.sigma_i, fibers_, o.ischemia);
    CsrMatrix ke = assemble_stiffness(grid_, o.sigma_e, fibers_, IschemicRegion{});
    prob_ = std::make_unique<BidomainProblem>(grid_, model_, o.membrane, o.tau, std::move(m),
                                              std::move(ki), std::move(ke));
    sys_ = std::make_unique<BidomainSystem>(*prob_);
  }

  BidomainProblem& problem() { return *prob_; }
  const BidomainSystem& system() const { return *sys_; }
  const SetupOptions& setup() const { return o_; }

  BidomainLoopResult run(const NonlinearSolveSpec& spec, bool store_v = false,
                         const Checkpoint* start = nullptr) {
    TimeLoopOptions opt;
    opt.steps = o_.steps();
    opt.stim = o_.stim;
    opt.store_v = store_v;
    opt.checkpoint_path = o_.checkpoint_path;
    opt.checkpoint_every = o_.checkpoint_every;
    return run_bidomain_loop(*prob_, *sys_, spec, opt, start);
  }

 private:
  static constexpr double kDeg = 3.14159265358979323846 / 180.0;
  SetupOptions o_;
  StructuredGrid grid_;
  FitzHughNagumo model_;
  FiberField fibers_;
  std::unique_ptr<BidomainProblem> prob_;
  std::unique_ptr<BidomainSystem> sys_;
};

class MonodomainBench {
 public:
  MonodomainBench(const SetupOptions& o, MonodomainProblem::Reaction mode)
      : o_(o),
        grid_(o.n, o.n, o.n, o.h, o.h, o.h),
        model_(o.fhn),
        fibers_(rotated_fibers(grid_, o.angle_endo_deg * kDeg, o.angle_epi_deg * kDeg)) {
    const Conductivity sm = harmonic_conductivity(o.sigma_i, o.sigma_e);
    CsrMatrix m = assemble_mass(grid_);
    CsrMatrix k = assemble_stiffness(grid_, sm, fibers_, o.ischemia);
    prob_ = std::make_unique<MonodomainProblem>(grid_, model_, o.membrane, o.tau, std::move(m),
                                                std::move(k), mode);
    sys_ = std::make_unique<MonodomainSystem>(*prob_);
  }

  MonodomainLoopResult run(const NonlinearSolveSpec& spec, bool store_v = false) {
    TimeLoopOptions opt;
    opt.steps = o_.steps();
    opt.stim = o_.stim;
    opt.store_v = store_v;
    return run_monodomain_loop(*prob_, *sys_, spec, opt);
  }

  const StructuredGrid& grid() const { return grid_; }

 private:
  static constexpr double kDeg = 3.14159265358979323846 / 180.0;
  SetupOptions o_;
  StructuredGrid grid_;
  FitzHughNagumo model_;
  FiberField fibers_;
  std::unique_ptr<MonodomainProblem> prob_;
  std::unique_ptr<MonodomainSystem> sys_;
};

// ==== Per-variant bookkeeping ==============================================

struct VariantStats {
  std::string label;
  int steps = 0;
  double avg_outer = 0.0;
  double avg_inner = 0.0;  // per outer iteration
  double seconds = 0.0;
  bool converged = true;

  static VariantStats from(const std::string& label, const std::vector<StepRecord>& recs,
                           bool converged) {
    VariantStats s;
    s.label = label;
    s.steps = static_cast<int>(recs.size());
    long outer = 0, inner = 0;
    for (const StepRecord& r : recs) {
      outer += r.trace.iterations();
      inner += r.trace.total_inner();
      s.seconds += r.seconds;
    }
    if (!recs.empty()) s.avg_outer = static_cast<double>(outer) / recs.size();
    if (outer > 0) s.avg_inner = static_cast<double>(inner) / static_cast<double>(outer);
    s.converged = converged;
    return s;
  }
};

struct ExperimentOutcome {
  bool all_converged = true;
  std::vector<VariantStats> stats;
};

namespace detail {

inline MetaList variant_meta(const SetupOptions& o, const Config& cfg, const std::string& experiment,
                             const std::string& variant) {
  MetaList m;
  m.push_back({"experiment", experiment});
  m.push_back({"variant", variant});
  m.push_back({"run", run_id_from(cfg.canonical_string() + "|" + experiment + "|" + variant)});
  for (auto& kv : o.meta()) m.push_back(kv);
  return m;
}

inline std::string csv_path(const std::string& out_dir, const std::string& experiment,
                            const std::string& variant) {
  return out_dir + "/" + experiment + "_" + variant + ".csv";
}

inline void print_stats(const VariantStats& s) {
  std::printf("  %-18s steps=%-4d avgOuter=%8.2f avgInner=%7.2f time=%7.3fs%s\n", s.label.c_str(),
              s.steps, s.avg_outer, s.avg_inner, s.seconds, s.converged ? "" : "  NOT CONVERGED");
  std::fflush(stdout);
}

inline void write_summary(const std::string& out_dir, const std::string& experiment,
                          const Config& cfg, const SetupOptions& o,
                          const std::vector<VariantStats>& stats) {
  std::vector<std::vector<std::string>> rows;
  for (const VariantStats& s : stats)
    rows.push_back({s.label, std::to_string(s.steps), format_double(s.avg_outer),
                    format_double(s.avg_inner), format_double(s.seconds),
                    s.converged ? "1" : "0"});
  write_table_csv(out_dir + "/" + experiment + "_summary.csv",
                  variant_meta(o, cfg, experiment, "summary"),
                  {"variant", "steps", "avgOuter", "avgInner", "seconds", "converged"}, rows);
}

}  // namespace detail

// ==== Experiments ===========================================================

// Parameter sweeps within each solver family on one fixed setup.
inline ExperimentOutcome experiment_tuning(const Config& cfg, const std::string& out_dir) {
  const SetupOptions o = SetupOptions::from_config(cfg);
  const NonlinearSolveSpec base = solver_spec_from_config(cfg);
  const std::string family = cfg.get_string("tuning.family", "all");
  BidomainBench bench(o);
  ExperimentOutcome out;

  std::vector<NonlinearSolveSpec> variants;
  auto add = [&](NonlinearSolveSpec s) { variants.push_back(s); };
  if (family == "all" || family == "newton") {
    NonlinearSolveSpec s = base;
    s.method = NlMethod::newton;
    add(s);
  }
  if (family == "all" || family == "inewton")
    for (double r0 : {0.5, 0.1, 0.01, 0.001}) {
      NonlinearSolveSpec s = base;
      s.method = NlMethod::inewton;
      s.ew_rtol0 = r0;
      add(s);
    }
  if (family == "all" || family == "qn")
    for (QnInitial init : {QnInitial::preonly, QnInitial::jaclow})
      for (int m : {2, 5, 10, 20}) {
        NonlinearSolveSpec s = base;
        s.method = NlMethod::qn;
        s.qn_initial = init;
        s.qn_m = m;
        add(s);
      }
  if (family == "all" || family == "ngmres")
    for (int m : {2, 5, 10, 20}) {
      NonlinearSolveSpec s = base;
      s.method = NlMethod::ngmres;
      s.ngmres_m = m;
      add(s);
    }
  if (family == "all" || family == "ncg")
    for (NcgBeta b : {NcgBeta::fr, NcgBeta::prp, NcgBeta::dy, NcgBeta::cd}) {
      NonlinearSolveSpec s = base;
      s.method = NlMethod::ncg;
      s.ncg_beta = b;
      add(s);
    }
  if (variants.empty())
    throw ConfigError("tuning.family '" + family +
                      "' is not one of all, newton, inewton, qn, ngmres, ncg");

  for (const NonlinearSolveSpec& s : variants) {
    const std::string label = solver_label(s);
    BidomainLoopResult r = bench.run(s);
    write_step_csv(detail::csv_path(out_dir, "tuning", label),
                   detail::variant_meta(o, cfg, "tuning", label), r.records);
    VariantStats st = VariantStats::from(label, r.records, r.converged);
    detail::print_stats(st);
    out.all_converged = out.all_converged && r.converged;
    out.stats.push_back(std::move(st));
  }
  detail::write_summary(out_dir, "tuning", cfg, o, out.stats);
  {
    SvgSeries ser;
    for (std::size_t i = 0; i < out.stats.size(); ++i) {
      ser.x.push_back(static_cast<double>(i));
      ser.y.push_back(out.stats[i].avg_outer);
    }
    write_svg_lineplot(out_dir + "/tuning.svg",
                       {"average outer iterations per variant", "variant index",
                        "avg outer iterations", true},
                       {ser});
  }
  return out;
}

// Fixed domain, refined meshes: first-order methods feel the growing
// stiffness, Newton-type methods stay flat.
inline ExperimentOutcome experiment_robustness_size(const Config& cfg,
                                                    const std::string& out_dir) {
  SetupOptions o = SetupOptions::from_config(cfg);
  const NonlinearSolveSpec base = solver_spec_from_config(cfg);
  std::vector<double> sizes_d = cfg.get_list("sizes", {8, 16, 24});
  const double extent = o.n * o.h;  // domain edge kept fixed across sizes
  ExperimentOutcome out;

  std::vector<NonlinearSolveSpec> solvers;
  {
    NonlinearSolveSpec s = base;
    s.method = NlMethod::newton;
    solvers.push_back(s);
    s.method = NlMethod::qn;
    s.qn_initial = QnInitial::preonly;
    solvers.push_back(s);
    s.qn_initial = QnInitial::jaclow;
    solvers.push_back(s);
    s.method = NlMethod::ncg;
    solvers.push_back(s);
  }
  std::vector<SvgSeries> series(solvers.size());
  for (std::size_t si = 0; si < solvers.size(); ++si)
    series[si].label = solver_label(solvers[si]);

  for (double sd : sizes_d) {
    const int n = static_cast<int>(sd);
    SetupOptions os = o;
    os.n = n;
    os.h = extent / n;
    BidomainBench bench(os);
    for (std::size_t si = 0; si < solvers.size(); ++si) {
      const std::string label = solver_label(solvers[si]) + "-n" + std::to_string(n);
      BidomainLoopResult r = bench.run(solvers[si]);
      write_step_csv(detail::csv_path(out_dir, "robustness_size", label),
                     detail::variant_meta(os, cfg, "robustness_size", label), r.records);
      VariantStats st = VariantStats::from(label, r.records, r.converged);
      detail::print_stats(st);
      series[si].x.push_back(static_cast<double>(n));
      series[si].y.push_back(st.avg_outer);
      out.all_converged = out.all_converged && r.converged;
      out.stats.push_back(std::move(st));
    }
  }
  detail::write_summary(out_dir, "robustness_size", cfg, o, out.stats);
  write_svg_lineplot(out_dir + "/robustness_size.svg",
                     {"outer iterations vs mesh size", "elements per axis",
                      "avg outer iterations", true},
                     series);
  return out;
}

// Same solvers with and without the reduced-conductivity patch.
inline ExperimentOutcome experiment_robustness_ischemia(const Config& cfg,
                                                        const std::string& out_dir) {
  SetupOptions o = SetupOptions::from_config(cfg);
  const NonlinearSolveSpec base = solver_spec_from_config(cfg);
  ExperimentOutcome out;

  std::vector<NonlinearSolveSpec> solvers;
  {
    NonlinearSolveSpec s = base;
    s.method = NlMethod::newton;
    solvers.push_back(s);
    s.method = NlMethod::inewton;
    solvers.push_back(s);
    s.method = NlMethod::qn;
    s.qn_initial = QnInitial::preonly;
    solvers.push_back(s);
    s.qn_initial = QnInitial::jaclow;
    solvers.push_back(s);
    s.method = NlMethod::ngmres;
    solvers.push_back(s);
    s.method = NlMethod::ncg;
    solvers.push_back(s);
  }

  for (bool isch : {false, true}) {
    SetupOptions os = o;
    os.ischemia.enabled = isch;
    BidomainBench bench(os);
    for (const NonlinearSolveSpec& s : solvers) {
      const std::string label = solver_label(s) + (isch ? "-ischemic" : "-baseline");
      BidomainLoopResult r = bench.run(s);
      write_step_csv(detail::csv_path(out_dir, "robustness_ischemia", label),
                     detail::variant_meta(os, cfg, "robustness_ischemia", label), r.records);
      VariantStats st = VariantStats::from(label, r.records, r.converged);
      detail::print_stats(st);
      out.all_converged = out.all_converged && r.converged;
      out.stats.push_back(std::move(st));
    }
  }
  detail::write_summary(out_dir, "robustness_ischemia", cfg, o, out.stats);
  {
    // paired bars as two polylines over solver index
    const std::size_t ns = solvers.size();
    SvgSeries base_s{"baseline", {}, {}}, isch_s{"ischemic", {}, {}};
    for (std::size_t i = 0; i < ns; ++i) {
      base_s.x.push_back(static_cast<double>(i));
      base_s.y.push_back(out.stats[i].avg_outer);
      isch_s.x.push_back(static_cast<double>(i));
      isch_s.y.push_back(out.stats[ns + i].avg_outer);
    }
    write_svg_lineplot(out_dir + "/robustness_ischemia.svg",
                       {"outer iterations, baseline vs ischemic", "solver index",
                        "avg outer iterations", false},
                       {base_s, isch_s});
  }
  return out;
}

// Longer horizon covering stimulus, depolarization and early plateau.
inline ExperimentOutcome experiment_full_beat(const Config& cfg, const std::string& out_dir) {
  SetupOptions o = SetupOptions::from_config(cfg);
  if (!cfg.has("time.t_end")) o.t_end = 8.0;
  const NonlinearSolveSpec base = solver_spec_from_config(cfg);
  BidomainBench bench(o);
  ExperimentOutcome out;

  std::vector<NonlinearSolveSpec> solvers;
  {
    NonlinearSolveSpec s = base;
    s.method = NlMethod::newton;
    solvers.push_back(s);
    s.method = NlMethod::qn;
    s.qn_initial = QnInitial::jaclow;
    solvers.push_back(s);
  }

  std::vector<SvgSeries> its_series;
  SvgSeries probe{"v(center)", {}, {}};
  for (std::size_t si = 0; si < solvers.size(); ++si) {
    const NonlinearSolveSpec& s = solvers[si];
    const std::string label = solver_label(s);
    const bool store = si == 0;
    BidomainLoopResult r = bench.run(s, store);
    write_step_csv(detail::csv_path(out_dir, "full_beat", label),
                   detail::variant_meta(o, cfg, "full_beat", label), r.records);
    VariantStats st = VariantStats::from(label, r.records, r.converged);
    detail::print_stats(st);
    SvgSeries ser{label, {}, {}};
    for (const StepRecord& rec : r.records) {
      ser.x.push_back(rec.time);
      ser.y.push_back(static_cast<double>(rec.trace.iterations()));
    }
    its_series.push_back(std::move(ser));
    if (store) {
      const StructuredGrid& g = bench.problem().grid();
      const std::size_t center = g.node_id(g.nx / 2, g.ny / 2, g.nz / 2);
      for (std::size_t i = 0; i < r.v_history.size(); ++i) {
        probe.x.push_back(r.records[i].time);
        probe.y.push_back(r.v_history[i][center]);
      }
    }
    out.all_converged = out.all_converged && r.converged;
    out.stats.push_back(std::move(st));
  }
  detail::write_summary(out_dir, "full_beat", cfg, o, out.stats);
  write_svg_lineplot(out_dir + "/full_beat_iterations.svg",
                     {"outer iterations per step", "time (ms)", "outer iterations", false},
                     its_series);
  write_svg_lineplot(out_dir + "/full_beat_probe.svg",
                     {"transmembrane potential at the domain center", "time (ms)", "v", false},
                     {probe});
  return out;
}

// One workload at several worker counts; speedup and efficiency relative to
// one worker.
inline ExperimentOutcome experiment_thread_scaling(const Config& cfg,
                                                   const std::string& out_dir) {
  SetupOptions o = SetupOptions::from_config(cfg);
  if (!cfg.has("time.t_end")) o.t_end = 0.25;
  NonlinearSolveSpec spec = solver_spec_from_config(cfg);
  std::vector<double> counts = cfg.get_list("threads", {1, 2, 4, 8});
  if (counts.empty()) throw ConfigError("thread_scaling: `threads` must list worker counts");
  ExperimentOutcome out;
  const int before = ThreadPool::instance().workers();

  double t1 = 0.0;
  std::vector<std::vector<std::string>> rows;
  SvgSeries sp{"speedup", {}, {}};
  for (double cd : counts) {
    const int p = static_cast<int>(cd);
    ThreadPool::instance().set_workers(p);
    BidomainBench bench(o);
    BidomainLoopResult r = bench.run(spec);
    const std::string label = solver_label(spec) + "-p" + std::to_string(p);
    write_step_csv(detail::csv_path(out_dir, "thread_scaling", label),
                   detail::variant_meta(o, cfg, "thread_scaling", label), r.records);
    VariantStats st = VariantStats::from(label, r.records, r.converged);
    detail::print_stats(st);
    if (p == static_cast<int>(counts.front())) t1 = st.seconds;
    const double s_p = st.seconds > 0 ? t1 / st.seconds : 0.0;
    const double e_p = s_p / p;
    rows.push_back({std::to_string(p), format_double(st.seconds), format_double(s_p),
                    format_double(e_p)});
    sp.x.push_back(p);
    sp.y.push_back(s_p);
    out.all_converged = out.all_converged && r.converged;
    out.stats.push_back(std::move(st));
  }
  ThreadPool::instance().set_workers(before);
  write_table_csv(out_dir + "/thread_scaling_summary.csv",
                  detail::variant_meta(o, cfg, "thread_scaling", "summary"),
                  {"workers", "seconds", "speedup", "efficiency"}, rows);
  write_svg_lineplot(out_dir + "/thread_scaling.svg",
                     {"strong scaling", "workers", "speedup", false}, {sp});
  return out;
}

// Residual histories of one cold-start step for every family.
inline ExperimentOutcome experiment_convergence_trace(const Config& cfg,
                                                      const std::string& out_dir) {
  SetupOptions o = SetupOptions::from_config(cfg);
  o.t_end = o.tau;  // exactly one step
  const NonlinearSolveSpec base = solver_spec_from_config(cfg);
  ExperimentOutcome out;

  std::vector<NonlinearSolveSpec> solvers;
  {
    NonlinearSolveSpec s = base;
    s.method = NlMethod::newton;
    solvers.push_back(s);
    s.method = NlMethod::inewton;
    solvers.push_back(s);
    s.method = NlMethod::qn;
    s.qn_initial = QnInitial::preonly;
    solvers.push_back(s);
    s.qn_initial = QnInitial::jaclow;
    solvers.push_back(s);
    s.method = NlMethod::ngmres;
    solvers.push_back(s);
    s.method = NlMethod::ncg;
    solvers.push_back(s);
  }

  std::vector<SvgSeries> series;
  for (const NonlinearSolveSpec& s : solvers) {
    const std::string label = solver_label(s);
    BidomainBench bench(o);
    BidomainLoopResult r = bench.run(s);
    VariantStats st = VariantStats::from(label, r.records, r.converged);
    detail::print_stats(st);
    std::vector<std::vector<std::string>> rows;
    SvgSeries ser{label, {}, {}};
    if (!r.records.empty()) {
      const std::vector<double>& rn = r.records[0].trace.residual_norms;
      for (std::size_t i = 0; i < rn.size(); ++i) {
        rows.push_back({std::to_string(i), format_double(rn[i])});
        ser.x.push_back(static_cast<double>(i));
        ser.y.push_back(rn[i]);
      }
    }
    write_table_csv(out_dir + "/convergence_trace_" + label + ".csv",
                    detail::variant_meta(o, cfg, "convergence_trace", label),
                    {"iter", "resNorm"}, rows);
    series.push_back(std::move(ser));
    out.all_converged = out.all_converged && r.converged;
    out.stats.push_back(std::move(st));
  }
  detail::write_summary(out_dir, "convergence_trace", cfg, o, out.stats);
  write_svg_lineplot(out_dir + "/convergence_trace.svg",
                     {"residual history, first step", "outer iteration", "residual norm", true},
                     series);
  return out;
}

// Reaction treated implicitly vs frozen at the previous step, against a fine
// implicit reference, in the single-field reduction.
inline ExperimentOutcome experiment_imex(const Config& cfg, const std::string& out_dir) {
  SetupOptions o = SetupOptions::from_config(cfg);
  if (!cfg.has("grid.n")) o.n = 8;
  if (!cfg.has("grid.h")) o.h = 0.05;
  if (!cfg.has("time.t_end")) o.t_end = 2.0;
  NonlinearSolveSpec spec = solver_spec_from_config(cfg);
  spec.method = NlMethod::newton;
  std::vector<double> taus = cfg.get_list("taus", {0.05, 0.1, 0.2, 0.4});
  const int refine = cfg.get_int("reference_refine", 64);
  ExperimentOutcome out;

  // reference: implicit reaction at the finest step size divided by `refine`
  double tau_min = taus[0];
  for (double t : taus) tau_min = std::min(tau_min, t);
  SetupOptions oref = o;
  oref.tau = tau_min / refine;
  MonodomainBench ref_bench(oref, MonodomainProblem::Reaction::implicit);
  MonodomainLoopResult ref = ref_bench.run(spec, true);
  out.all_converged = out.all_converged && ref.converged;

  const StructuredGrid& g = ref_bench.grid();
  H1Norm h1(assemble_mass(g), assemble_stiffness_iso(g));

  SvgSeries implicit_s{"implicit", {}, {}}, explicit_s{"explicit-reaction", {}, {}};
  std::vector<std::vector<std::string>> rows;
  for (double tau : taus) {
    SetupOptions ot = o;
    ot.tau = tau;
    const double stride_d = tau / oref.tau;
    const std::size_t stride = static_cast<std::size_t>(std::llround(stride_d));
    if (std::abs(stride_d - static_cast<double>(stride)) > 1e-9)
      throw ConfigError("imex: each entry of `taus` must be an integer multiple of the "
                        "reference step");
    double errs[2] = {0.0, 0.0};
    int mi = 0;
    for (auto mode :
         {MonodomainProblem::Reaction::implicit, MonodomainProblem::Reaction::explicit_prev}) {
      MonodomainBench bench(ot, mode);
      MonodomainLoopResult r = bench.run(spec, true);
      const std::string label = std::string(mi == 0 ? "implicit" : "explicit") + "-tau" +
                                format_double(tau);
      write_step_csv(detail::csv_path(out_dir, "imex", label),
                     detail::variant_meta(ot, cfg, "imex", label), r.records);
      VariantStats st = VariantStats::from(label, r.records, r.converged);
      detail::print_stats(st);
      out.all_converged = out.all_converged && r.converged;
      double err = std::numeric_limits<double>::quiet_NaN();
      if (r.converged && ref.converged)
        err = bochner_relative_error(tau, r.v_history, ref.v_history, stride, h1);
      errs[mi] = err;
      out.stats.push_back(std::move(st));
      ++mi;
    }
    rows.push_back({format_double(tau), format_double(errs[0]), format_double(errs[1])});
    implicit_s.x.push_back(tau);
    implicit_s.y.push_back(errs[0]);
    explicit_s.x.push_back(tau);
    explicit_s.y.push_back(errs[1]);
    std::printf("  tau=%-6s  err(implicit)=%-12s err(explicit)=%-12s\n", format_double(tau).c_str(),
                format_double(errs[0]).c_str(), format_double(errs[1]).c_str());
    std::fflush(stdout);
  }
  write_table_csv(out_dir + "/imex_errors.csv", detail::variant_meta(o, cfg, "imex", "errors"),
                  {"tau", "errImplicit", "errExplicit"}, rows);
  write_svg_lineplot(out_dir + "/imex.svg",
                     {"step-size error, implicit vs frozen reaction", "tau (ms)",
                      "relative space-time error", true},
                     {implicit_s, explicit_s});
  return out;
}

// ==== Driver ================================================================

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "tuning",       "robustness_size", "robustness_ischemia", "full_beat",
      "thread_scaling", "convergence_trace", "imex"};
  return names;
}

inline ExperimentOutcome run_experiment(const std::string& kind, const Config& cfg,
                                        const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::printf("experiment %s -> %s\n", kind.c_str(), out_dir.c_str());
  std::fflush(stdout);
  ExperimentOutcome out;
  if (kind == "tuning")
    out = experiment_tuning(cfg, out_dir);
  else if (kind == "robustness_size")
    out = experiment_robustness_size(cfg, out_dir);
  else if (kind == "robustness_ischemia")
    out = experiment_robustness_ischemia(cfg, out_dir);
  else if (kind == "full_beat")
    out = experiment_full_beat(cfg, out_dir);
  else if (kind == "thread_scaling")
    out = experiment_thread_scaling(cfg, out_dir);
  else if (kind == "convergence_trace")
    out = experiment_convergence_trace(cfg, out_dir);
  else if (kind == "imex")
    out = experiment_imex(cfg, out_dir);
  else {
    std::string names;
    for (const std::string& n : experiment_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown experiment '" + kind + "'; available: " + names);
  }
  cfg.require_consumed();
  return out;
}

}  // namespace cardionl
