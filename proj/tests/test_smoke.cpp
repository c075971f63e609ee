// Include every public header once to catch missing includes and ODR
// problems early; one tiny end-to-end exercise.

#include <gtest/gtest.h>

#include "cardionl/bidomain.hpp"
#include "cardionl/config.hpp"
#include "cardionl/csr.hpp"
#include "cardionl/csv.hpp"
#include "cardionl/dense.hpp"
#include "cardionl/errors.hpp"
#include "cardionl/experiments.hpp"
#include "cardionl/fem.hpp"
#include "cardionl/gmg.hpp"
#include "cardionl/grid.hpp"
#include "cardionl/ionic.hpp"
#include "cardionl/linear_solve.hpp"
#include "cardionl/nonlinear.hpp"
#include "cardionl/parallel.hpp"
#include "cardionl/step_system.hpp"
#include "cardionl/svg.hpp"
#include "cardionl/timeloop.hpp"
#include "cardionl/vector_ops.hpp"

namespace cardionl {
namespace {

TEST(Smoke, TinyBidomainStepSolves) {
  StructuredGrid g(4, 4, 4, 0.025, 0.025, 0.025);
  FitzHughNagumo model;
  const FiberField fibers = rotated_fibers(g, -1.0471975511965976, 1.0471975511965976);
  const Conductivity si{3.0e-3, 3.1525e-4};
  const Conductivity se{2.0e-3, 1.3514e-3};
  CsrMatrix m = assemble_mass(g);
  CsrMatrix ki = assemble_stiffness(g, si, fibers);
  CsrMatrix ke = assemble_stiffness(g, se, fibers);
  MembraneParams mem;
  BidomainProblem prob(g, model, mem, 0.05, std::move(m), std::move(ki), std::move(ke));

  BidomainSystem sys(prob);
  TimeLoopOptions opt;
  opt.steps = 2;
  opt.stim.box = BoxRegion{{0, 0, 0}, {0.05, 0.05, 0.05}};
  opt.stim.amplitude = 1000.0;
  NonlinearSolveSpec spec;
  spec.method = NlMethod::newton;
  BidomainLoopResult res = run_bidomain_loop(prob, sys, spec, opt);
  EXPECT_TRUE(res.converged);
  ASSERT_EQ(res.records.size(), 2u);
  EXPECT_LE(res.records[0].trace.residual_norms.back(),
            1e-6 * res.records[0].trace.residual_norms.front());
}

}  // namespace
}  // namespace cardionl
