#include <doctest.h>

#include <cmath>

#include "fdot/reference_oracle.hpp"
#include "fdot/scenario_io.hpp"

using namespace fdot;

namespace {

Scenario path(int n, int k) {
  LineOptions o;
  o.n = n;
  o.k = k;
  o.width = 0.2;
  o.background = 0.2;
  return generate_line(o);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("micro instance: both oracles return the forced transfer") {
  LineOptions o;
  o.n = 2;
  o.k = 1;
  const auto s = generate_line(o);
  const auto b = solve_barrier(s.graph, s.rho0, s.rhok, 1, std::nullopt);
  const auto x = solve_exhaustive(s.graph, s.rho0, s.rhok, 1, std::nullopt);
  REQUIRE(b.status == OracleStatus::Optimal);
  REQUIRE(x.status == OracleStatus::Optimal);
  const double eps = s.rho_floor();
  const double exact = (1 - 2 * eps) * (1 - 2 * eps) / (2 * (1 - eps));
  CHECK(rel(b.objective, exact) < 1e-10);
  CHECK(rel(x.objective, exact) < 1e-10);
  CHECK(b.momentum.steps(0, 0) == doctest::Approx(1 - 2 * eps).epsilon(1e-10));
}

TEST_CASE("barrier and exhaustive search agree on a small path") {
  const auto s = path(3, 2);
  const auto b = solve_barrier(s.graph, s.rho0, s.rhok, s.k, std::nullopt);
  const auto x = solve_exhaustive(s.graph, s.rho0, s.rhok, s.k, std::nullopt);
  REQUIRE(b.status == OracleStatus::Optimal);
  REQUIRE(x.status == OracleStatus::Optimal);
  CHECK(x.nullspace_dim <= 6);
  CHECK(rel(b.objective, x.objective) < 1e-8);
}

TEST_CASE("barrier and exhaustive search agree with an active cap") {
  const auto s = path(3, 2);
  const auto fd = FdParams::uniform(s.graph.n_edges(), s.k, 2.5, 0.6, Enforcement::AllSteps);
  const auto free = solve_barrier(s.graph, s.rho0, s.rhok, s.k, std::nullopt);
  const auto b = solve_barrier(s.graph, s.rho0, s.rhok, s.k, fd);
  const auto x = solve_exhaustive(s.graph, s.rho0, s.rhok, s.k, fd);
  REQUIRE(b.status == OracleStatus::Optimal);
  REQUIRE(x.status == OracleStatus::Optimal);
  CHECK(rel(b.objective, x.objective) < 1e-8);
  CHECK(b.objective > free.objective + 1e-3);
}

TEST_CASE("both oracles report a cap that is too tight on a small path") {
  const auto s = path(3, 2);
  const auto fd = FdParams::uniform(s.graph.n_edges(), s.k, 1.0, 0.6, Enforcement::AllSteps);
  CHECK(solve_barrier(s.graph, s.rho0, s.rhok, s.k, fd).status == OracleStatus::Infeasible);
  CHECK(solve_exhaustive(s.graph, s.rho0, s.rhok, s.k, fd).status == OracleStatus::Infeasible);
}

TEST_CASE("barrier solution satisfies continuity and the cap") {
  const auto s = path(6, 4);
  const auto fd = FdParams::uniform(s.graph.n_edges(), s.k, 1.0, 0.35);
  const auto b = solve_barrier(s.graph, s.rho0, s.rhok, s.k, fd);
  REQUIRE(b.status == OracleStatus::Optimal);
  CHECK(b.certificate.continuity_residual < 1e-10);
  CHECK(b.certificate.fd_violation < 1e-10);
  CHECK(b.certificate.stationarity < 1e-8);
  CHECK(b.certificate.duality_gap <= 1e-9 * std::max(1.0, b.objective));
  CHECK(std::abs(continuity_residual(b.rho, b.momentum, s.graph).maxCoeff()) < 1e-10);
}

TEST_CASE("a cap below the required transfer is infeasible") {
  LineOptions o;
  o.n = 2;
  o.k = 1;
  const auto s = generate_line(o);
  const auto fd = FdParams::uniform(2, 1, 1.0, 1.0, Enforcement::AllSteps);
  const auto b = solve_barrier(s.graph, s.rho0, s.rhok, 1, fd);
  CHECK(b.status == OracleStatus::Infeasible);
  const auto x = solve_exhaustive(s.graph, s.rho0, s.rhok, 1, fd);
  CHECK(x.status == OracleStatus::Infeasible);
}

TEST_CASE("oversize programs are refused") {
  const auto s = path(30, 5);
  BarrierOptions opts;
  opts.max_variables = 100;
  CHECK(solve_barrier(s.graph, s.rho0, s.rhok, s.k, std::nullopt, opts).status == OracleStatus::Refused);
  CHECK(solve_exhaustive(s.graph, s.rho0, s.rhok, s.k, std::nullopt).status == OracleStatus::Refused);
}

// Frozen values, cross-checked against an independent conic solver to 2e-8.
TEST_CASE("line oracle values are stable") {
  struct Case {
    int k;
    std::optional<double> v0, rho_hat;
    double expected;
  };
  for (const Case& c : {Case{5, std::nullopt, std::nullopt, 137.825441362789},
                        Case{5, 1.0, 0.10, 524.277982870491}, Case{7, 3.0, 0.15, 179.385902158277}}) {
    LineOptions o;
    o.k = c.k;
    o.v0 = c.v0;
    o.rho_hat = c.rho_hat;
    const auto s = generate_line(o);
    BarrierOptions opts;
    opts.rho_floor = s.rho_floor();
    const auto b = solve_barrier(s.graph, s.rho0, s.rhok, s.k, s.fd_params(), opts);
    REQUIRE(b.status == OracleStatus::Optimal);
    CHECK(rel(b.objective, c.expected) < 1e-9);
  }
}
