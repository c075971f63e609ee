// Benchmark driver for the implicit cardiac-tissue step solvers.
//
// Usage:
//   cardio-nlsolve run --experiment <kind> [--config FILE] [--set key=value]...
//                      [solver flags] --out DIR
//
// Exit codes: 0 success, 2 usage or configuration error, 3 a nonlinear solve
// failed to converge.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cardionl/experiments.hpp"
#include "cardionl/parallel.hpp"

namespace {

void print_usage_grid() {
  std::string names;
  for (const std::string& n : cardionl::experiment_names())
    names += (names.empty() ? "" : ", ") + n;
  std::printf(
      "experiments: %s\n"
      "\n"
      "configuration keys (defaults in parentheses), settable in --config files\n"
      "or through --set key=value:\n"
      "  grid.n (16)            elements per axis of the cubic mesh\n"
      "  grid.h (0.025)         mesh size in cm\n"
      "  time.tau (0.05)        step size in ms\n"
      "  time.t_end (2)         final time in ms\n"
      "  membrane.chi (1000)    surface-to-volume ratio, 1/cm\n"
      "  membrane.cm (1)        membrane capacitance, uF/cm^2\n"
      "  ionic.k (8) ionic.a (0.1) ionic.eps (0.01) ionic.gamma (0.5) ionic.v_ref (0)\n"
      "  sigma.i.l (3e-3) sigma.i.t (3.1525e-4) sigma.i.n (= sigma.i.t)\n"
      "  sigma.e.l (2e-3) sigma.e.t (1.3514e-3) sigma.e.n (= sigma.e.t)\n"
      "  fibers.angle_endo_deg (-60) fibers.angle_epi_deg (60)\n"
      "  ischemia.enabled (false) ischemia.scale (0.5)\n"
      "  ischemia.box.lo / ischemia.box.hi (half-cube against the origin corner),\n"
      "                         three numbers each\n"
      "  stim.box.lo (0,0,0) stim.box.hi (0.1,0.1,0.1)\n"
      "  stim.amplitude (1000) stim.duration (1)\n"
      "  checkpoint.path ()     write binary snapshots here\n"
      "  checkpoint.every (0)   also write every k-th step\n"
      "  solver.type (newton)   newton | inewton | qn | ngmres | ncg\n"
      "  solver.atol (1e-12) solver.rtol (1e-6) solver.stol (0) solver.max_it (2000)\n"
      "  solver.lin_rtol (1e-8) solver.lin_max_it (1000)\n"
      "  solver.ew_rtol0 (0.1)  first forcing term of the adaptive-tolerance variant\n"
      "  solver.qn_m (5) solver.qn_initial (preonly|jaclow) solver.jaclow_its (10)\n"
      "  solver.ngmres_m (20) solver.ncg_beta (fr|prp|dy|cd)\n"
      "  threads.workers (1)    worker threads for assembly and vector kernels\n"
      "\n"
      "per-experiment keys:\n"
      "  tuning.family (all)        all | newton | inewton | qn | ngmres | ncg\n"
      "  sizes (8,16,24)            robustness_size mesh sizes\n"
      "  threads (1,2,4,8)          thread_scaling worker counts\n"
      "  taus (0.05,0.1,0.2,0.4)    imex step sizes\n"
      "  reference_refine (64)      imex reference refinement of the smallest tau\n",
      names.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonlinear solver benchmarks for implicit cardiac tissue steps"};
  app.require_subcommand(1);

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  std::string experiment, out_dir, config_file;
  std::vector<std::string> overrides;
  std::string snes_type, ncg_type, qn_scale_type;
  int qn_m = -1, max_it = -1, ngmres_m = -1, threads = -1;
  double ew_rtol = -1.0, ksp_rtol = -1.0;
  run->add_option("--experiment", experiment, "experiment kind")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--config", config_file, "flat key = value configuration file");
  run->add_option("--set", overrides, "key=value override, repeatable");
  run->add_option("--snes-type", snes_type, "solver family (solver.type)");
  run->add_option("--snes-qn-m", qn_m, "limited-memory history length (solver.qn_m)");
  run->add_option("--snes-ncg-type", ncg_type, "conjugacy update (solver.ncg_beta)");
  run->add_option("--snes-qn-scale-type", qn_scale_type,
                  "initial-matrix handling, preonly or jaclow (solver.qn_initial)");
  run->add_option("--snes-ngmres-m", ngmres_m, "mixing window (solver.ngmres_m)");
  run->add_option("--snes-ksp-ew-rtol", ew_rtol, "first adaptive forcing term (solver.ew_rtol0)");
  run->add_option("--ksp-rtol", ksp_rtol, "inner linear tolerance (solver.lin_rtol)");
  run->add_option("--snes-max-it", max_it, "outer iteration cap (solver.max_it)");
  run->add_option("--threads", threads, "worker threads (threads.workers)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n\n", e.what());
    print_usage_grid();
    return 2;
  }

  try {
    cardionl::Config cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const std::string& kv : overrides) cfg.set_pair(kv);
    if (!snes_type.empty()) cfg.set("solver.type", snes_type);
    if (!ncg_type.empty()) cfg.set("solver.ncg_beta", ncg_type);
    if (!qn_scale_type.empty()) cfg.set("solver.qn_initial", qn_scale_type);
    if (qn_m >= 0) cfg.set("solver.qn_m", std::to_string(qn_m));
    if (ngmres_m >= 0) cfg.set("solver.ngmres_m", std::to_string(ngmres_m));
    if (max_it >= 0) cfg.set("solver.max_it", std::to_string(max_it));
    if (ew_rtol >= 0) cfg.set("solver.ew_rtol0", cardionl::format_double(ew_rtol));
    if (ksp_rtol >= 0) cfg.set("solver.lin_rtol", cardionl::format_double(ksp_rtol));
    if (threads >= 0) cfg.set("threads.workers", std::to_string(threads));

    cardionl::ThreadPool::instance().set_workers(cfg.get_int("threads.workers", 1));
    const cardionl::ExperimentOutcome outcome =
        cardionl::run_experiment(experiment, cfg, out_dir);
    if (!outcome.all_converged) {
      std::fprintf(stderr, "at least one nonlinear solve did not converge\n");
      return 3;
    }
    return 0;
  } catch (const cardionl::ConfigError& e) {
    std::fprintf(stderr, "%s\n\n", e.what());
    print_usage_grid();
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
