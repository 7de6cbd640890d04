#include <doctest.h>

#include <cmath>

#include "fdot/admm_solver.hpp"
#include "fdot/scenario_io.hpp"

using namespace fdot;

namespace {

Scenario micro() {
  LineOptions o;
  o.n = 2;
  o.k = 1;
  return generate_line(o);
}

Scenario small_line(bool fd, int k = 4) {
  LineOptions o;
  o.n = 8;
  o.k = k;
  if (fd) {
    o.v0 = 1.0;
    o.rho_hat = 0.3;
  }
  auto s = generate_line(o);
  s.settings.tol_primal = 1e-9;
  return s;
}

}  // namespace

TEST_CASE("micro instance: all the mass crosses the single segment") {
  const auto s = micro();
  const auto t = solve(s);
  REQUIRE(t.converged);
  const double eps = s.rho_floor();
  // The floored marginals are (1 - eps, eps) and (eps, 1 - eps); continuity
  // forces m = 1 - 2 eps forward, and both densities seen by the edge are 1 - eps.
  const double moved = 1.0 - 2.0 * eps;
  const double exact = moved * moved / (2.0 * (1.0 - eps));
  CHECK(t.objective == doctest::Approx(exact).epsilon(1e-8));
  CHECK(t.momentum.steps(0, 0) == doctest::Approx(moved).epsilon(1e-8));
  CHECK(t.momentum.steps(1, 0) < 1e-8);
}

TEST_CASE("converged runs conserve mass and stay nonnegative") {
  for (bool fd : {false, true}) {
    const auto s = small_line(fd);
    const auto t = solve(s);
    REQUIRE(t.converged);
    for (int i = 0; i <= s.k; ++i) {
      CHECK(std::abs(t.rho.snapshot(i).sum() - 1.0) <= s.n_vertices * s.settings.tol_primal);
    }
    CHECK(t.rho.snapshots.minCoeff() > 0.0);
    CHECK(t.momentum.steps.minCoeff() >= 0.0);
    CHECK(t.continuity_residual < s.settings.tol_primal);
  }
}

TEST_CASE("reported momenta lie in the FD set exactly") {
  const auto s = small_line(true, 5);
  const auto t = solve(s);
  const auto fd = *s.fd_params();
  const Eigen::MatrixXd rbar = midpoint_densities(t.rho, s.graph);
  for (int i = 1; i <= s.k; ++i) {
    if (!fd.enforced(i)) continue;
    for (EdgeId e = 0; e < s.graph.n_edges(); ++e) {
      CHECK(t.momentum.steps(e, i - 1) <= capacity(fd, e, i, rbar(e, i - 1)));
    }
  }
}

TEST_CASE("frozen coupling gives a feasible but different iteration") {
  auto s = small_line(true);
  s.settings.coupling = FdCoupling::Frozen;
  s.settings.max_iters = 3000;
  AdmmSolver solver(s);
  CHECK_FALSE(solver.joint_coupling());
  const auto t = solver.solve();
  CHECK(t.momentum.steps.minCoeff() >= 0.0);
}

TEST_CASE("iteration is independent of the thread count") {
  auto s = small_line(true);
  s.settings.max_iters = 300;
  AdmmSolver one(s);
  const auto a = one.solve();
  s.settings.threads = 3;
  AdmmSolver three(s);
  const auto b = three.solve();
  CHECK(a.objective == b.objective);
  CHECK(a.rho.snapshots == b.rho.snapshots);
  CHECK(a.momentum.steps == b.momentum.steps);
}

TEST_CASE("random states are reproducible and positive") {
  const auto s = small_line(true);
  AdmmSolver solver(s);
  const auto a = solver.random_state(7), b = solver.random_state(7), c = solver.random_state(8);
  CHECK(a.rho.snapshots == b.rho.snapshots);
  CHECK(a.lambda == b.lambda);
  CHECK(a.rho.snapshots != c.rho.snapshots);
  CHECK(a.rho.snapshots.minCoeff() > 0.0);
  CHECK(a.rho.snapshot(0) == solver.initial_state().rho.snapshot(0));
}

TEST_CASE("history records one entry per iteration") {
  auto s = small_line(false);
  s.settings.max_iters = 25;
  s.settings.tol_primal = 1e-30;
  const auto t = solve(s);
  CHECK_FALSE(t.converged);
  CHECK(t.iterations == 25);
  REQUIRE(t.history.size() == 25);
  CHECK(t.history.front().iteration == 1);
  CHECK(t.history.back().iteration == 25);
}

TEST_CASE("invalid settings are rejected") {
  auto s = small_line(false);
  s.settings.beta = -1.0;
  CHECK_THROWS_AS(AdmmSolver{s}, ValidationError);
  s = small_line(false);
  s.settings.max_iters = 0;
  CHECK_THROWS_AS(AdmmSolver{s}, ValidationError);
}

TEST_CASE("disconnected graphs are refused by the solver front end") {
  Scenario s;
  s.n_vertices = 4;
  s.pairs = {{0, 1}, {2, 3}};
  s.graph_options.allow_disconnected = true;
  s.rho0 = Eigen::Vector4d(0.5, 0.5, 0.0, 0.0);
  s.rhok = Eigen::Vector4d(0.0, 0.0, 0.5, 0.5);
  finalize(s);
  CHECK_THROWS_AS(solve(s), SolverError);
}
