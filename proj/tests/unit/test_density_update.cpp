#include <doctest.h>

#include <random>

#include <Eigen/Dense>

#include "fdot/density_update.hpp"
#include "support.hpp"

using namespace fdot;

namespace {

DirectedGraph small_graph() {
  const std::vector<std::pair<VertexId, VertexId>> pairs{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {1, 3}};
  return DirectedGraph::from_undirected_edge_list(pairs, 4);
}

DensitySubproblem make(const DirectedGraph& g, std::mt19937_64& rng, int k, bool coupled) {
  Eigen::VectorXd a = test::random_vector(rng, g.n_vertices(), 0.1, 1.0);
  Eigen::VectorXd b = test::random_vector(rng, g.n_vertices(), 0.1, 1.0);
  a /= a.sum();
  b /= b.sum();
  DensitySubproblem p(g, a, b, k, 60.0, 1e-9);
  p.set_momentum(test::random_matrix(rng, g.n_edges(), k, 0.0, 0.2));
  p.set_continuity_dual(test::random_matrix(rng, g.n_vertices(), k, -1.0, 1.0));
  if (coupled) {
    std::vector<bool> on(static_cast<std::size_t>(k), true);
    on.front() = false;
    p.set_midpoint_coupling(on, test::random_matrix(rng, g.n_edges(), k, 0.0, 0.3),
                            test::random_matrix(rng, g.n_edges(), k, -1.0, 1.0), 50.0);
  }
  return p;
}

}  // namespace

TEST_CASE("Thomas solve matches a dense solve") {
  std::mt19937_64 rng(1);
  const int n = 7;
  std::vector<double> diag(n), off(n - 1), rhs(n);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    diag[i] = test::uniform(rng, 3.0, 4.0);
    rhs[i] = b[i] = test::uniform(rng, -1.0, 1.0);
    a(i, i) = diag[i];
    if (i + 1 < n) {
      off[i] = test::uniform(rng, -1.0, 1.0);
      a(i, i + 1) = a(i + 1, i) = off[i];
    }
  }
  solve_tridiagonal(diag, off, rhs);
  const Eigen::VectorXd x = a.ldlt().solve(b);
  for (int i = 0; i < n; ++i) CHECK(rhs[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("Hessian matches differences of the gradient") {
  const auto g = small_graph();
  for (bool coupled : {false, true}) {
    std::mt19937_64 rng(coupled ? 2 : 3);
    auto p = make(g, rng, 4, coupled);
    const Eigen::MatrixXd x = test::random_matrix(rng, g.n_vertices(), 3, 0.1, 0.5);
    const Eigen::MatrixXd h = p.dense_hessian(x);
    const double step = 1e-6;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Eigen::MatrixXd xp = x, xm = x;
      xp.data()[j] += step;
      xm.data()[j] -= step;
      const Eigen::MatrixXd col = (p.gradient(xp) - p.gradient(xm)) / (2 * step);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        CHECK(h(i, j) == doctest::Approx(col.data()[i]).epsilon(1e-5).scale(1.0));
      }
    }
  }
}

TEST_CASE("change agrees with the difference of values") {
  const auto g = small_graph();
  std::mt19937_64 rng(4);
  auto p = make(g, rng, 5, true);
  const Eigen::MatrixXd x = test::random_matrix(rng, g.n_vertices(), 4, 0.1, 0.5);
  const Eigen::MatrixXd y = x + test::random_matrix(rng, g.n_vertices(), 4, -0.01, 0.01);
  CHECK(p.change(x, y) == doctest::Approx(p.value(y) - p.value(x)).epsilon(1e-9));
}

TEST_CASE("projected Newton reaches a stationary point") {
  const auto g = small_graph();
  for (bool coupled : {false, true}) {
    std::mt19937_64 rng(coupled ? 8 : 9);
    auto p = make(g, rng, 4, coupled);
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(g.n_vertices(), 3, 0.25);
    const auto rep = p.minimize(x, 50, 1e-10);
    CHECK(rep.converged);
    CHECK_FALSE(rep.line_search_failed);
    CHECK(x.minCoeff() >= p.floor());
    const Eigen::MatrixXd grad = p.gradient(x);
    // Free coordinates have zero gradient, coordinates at the floor push up.
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] > p.floor() * 10) {
        CHECK(std::abs(grad.data()[i]) < 1e-7);
      } else {
        CHECK(grad.data()[i] > -1e-7);
      }
    }
    // Random perturbations do not improve the value.
    for (int s = 0; s < 20; ++s) {
      const Eigen::MatrixXd y =
          (x + test::random_matrix(rng, g.n_vertices(), 3, -1e-3, 1e-3)).cwiseMax(p.floor());
      CHECK(p.change(x, y) >= -1e-12);
    }
  }
}

TEST_CASE("k = 1 has nothing to optimize") {
  const auto g = small_graph();
  DensitySubproblem p(g, Eigen::VectorXd::Constant(4, 0.25), Eigen::VectorXd::Constant(4, 0.25), 1, 60.0, 1e-9);
  Eigen::MatrixXd x(4, 0);
  CHECK(p.minimize(x, 10, 1e-10).converged);
}
