#include <doctest.h>

#include <random>

#include "fdot/discretization.hpp"
#include "support.hpp"

using namespace fdot;

namespace {

DirectedGraph path3() {
  const std::vector<std::pair<VertexId, VertexId>> pairs{{0, 1}, {1, 2}};
  return DirectedGraph::from_undirected_edge_list(pairs, 3);
}

}  // namespace

TEST_CASE("time grid") {
  const TimeGrid t(4);
  CHECK(t.snapshot_time(0) == 0.0);
  CHECK(t.snapshot_time(4) == 1.0);
  CHECK(t.midpoint_time(1) == doctest::Approx(0.125));
  CHECK_THROWS(TimeGrid(0));
}

TEST_CASE("linear interpolation hits both marginals") {
  Eigen::VectorXd a(3), b(3);
  a << 1, 0, 0;
  b << 0, 0, 1;
  const auto rho = linear_interpolation(a, b, 4);
  CHECK(rho.k() == 4);
  CHECK(rho.snapshot(0) == a);
  CHECK(rho.snapshot(4) == b);
  CHECK(rho.snapshots(0, 1) == doctest::Approx(0.75));
}

TEST_CASE("midpoint density pairs the previous tail with the current head") {
  const auto g = path3();
  DensityTrajectory rho;
  rho.snapshots.resize(3, 3);
  rho.snapshots << 0.1, 0.2, 0.3,  //
      0.4, 0.5, 0.6,               //
      0.7, 0.8, 0.9;
  // edge 0 is 0 -> 1, step 2: (rho_1(0) + rho_2(1)) / 2
  CHECK(midpoint_density(rho, g.edge(0), 2) == doctest::Approx(0.5 * (0.2 + 0.6)));
  // edge 1 is 1 -> 0, step 1: (rho_0(1) + rho_1(0)) / 2
  CHECK(midpoint_density(rho, g.edge(1), 1) == doctest::Approx(0.5 * (0.4 + 0.2)));
  const Eigen::MatrixXd all = midpoint_densities(rho, g);
  CHECK(all(0, 1) == doctest::Approx(0.4));
}

TEST_CASE("kinetic weights and action") {
  const auto g = path3();
  const auto rho = linear_interpolation(Eigen::Vector3d(0.5, 0.3, 0.2), Eigen::Vector3d(0.2, 0.3, 0.5), 2);
  MomentumTrajectory m;
  m.steps = Eigen::MatrixXd::Zero(g.n_edges(), 2);
  m.steps(0, 0) = 0.1;
  const double w = kinetic_weight(rho, g.edge(0), 1);
  CHECK(w == doctest::Approx(2.0 * (0.5 / 0.5 + 0.5 / rho.snapshots(1, 1))));
  CHECK(action(rho, m, g) == doctest::Approx(0.5 * w * 0.01));
  CHECK_THROWS_AS(kinetic_weight(rho, g.edge(0), 1, 0.6), DensityFloorError);
}

TEST_CASE("continuity residual vanishes for an exact transfer") {
  const auto g = path3();
  DensityTrajectory rho;
  rho.snapshots.resize(3, 2);
  rho.snapshots << 1.0, 0.0,  //
      0.0, 1.0,               //
      0.0, 0.0;
  MomentumTrajectory m;
  m.steps = Eigen::MatrixXd::Zero(g.n_edges(), 1);
  m.steps(0, 0) = 1.0;
  CHECK(continuity_residual(rho, m, g).cwiseAbs().maxCoeff() == 0.0);
  m.steps(1, 0) = 0.25;
  CHECK(continuity_residual(rho, m, g).cwiseAbs().maxCoeff() == doctest::Approx(0.25));
}
