#include "fdot/discretization.hpp"

#include <cmath>
#include <string>

namespace fdot {

namespace {

void check_step(const DensityTrajectory& rho, int step) {
  if (step < 1 || step > rho.k()) {
    throw std::out_of_range("time step " + std::to_string(step) + " outside [1, " +
                            std::to_string(rho.k()) + "]");
  }
}

void check_shapes(const DensityTrajectory& rho, const MomentumTrajectory& m,
                  const DirectedGraph& g) {
  if (rho.n_vertices() != g.n_vertices() || m.n_edges() != g.n_edges() || m.k() != rho.k()) {
    throw std::invalid_argument("trajectory dimensions do not match the graph / time grid");
  }
}

}  // namespace

TimeGrid::TimeGrid(int intervals) : k(intervals) {
  if (intervals < 1) throw std::invalid_argument("time grid needs k >= 1");
}

DensityTrajectory linear_interpolation(const Eigen::VectorXd& rho0, const Eigen::VectorXd& rhok,
                                       int k) {
  TimeGrid grid(k);
  if (rho0.size() != rhok.size()) throw std::invalid_argument("marginal sizes differ");
  DensityTrajectory rho;
  rho.snapshots.resize(rho0.size(), k + 1);
  for (int i = 0; i <= k; ++i) {
    const double t = grid.snapshot_time(i);
    rho.snapshots.col(i) = (1.0 - t) * rho0 + t * rhok;
  }
  rho.snapshots.col(0) = rho0;
  rho.snapshots.col(k) = rhok;
  return rho;
}

double midpoint_density(const DensityTrajectory& rho, const Edge& edge, int step) {
  check_step(rho, step);
  return 0.5 * (rho.snapshots(edge.tail, step - 1) + rho.snapshots(edge.head, step));
}

Eigen::MatrixXd midpoint_densities(const DensityTrajectory& rho, const DirectedGraph& g) {
  if (rho.n_vertices() != g.n_vertices()) throw std::invalid_argument("density size mismatch");
  const int k = rho.k();
  Eigen::MatrixXd out(g.n_edges(), k);
  for (int i = 1; i <= k; ++i) {
    for (EdgeId e = 0; e < g.n_edges(); ++e) {
      const auto& ed = g.edge(e);
      out(e, i - 1) = 0.5 * (rho.snapshots(ed.tail, i - 1) + rho.snapshots(ed.head, i));
    }
  }
  return out;
}

double kinetic_weight(const DensityTrajectory& rho, const Edge& edge, int step, double floor) {
  check_step(rho, step);
  const double a = rho.snapshots(edge.tail, step - 1);
  const double b = rho.snapshots(edge.head, step);
  if (!(a > 0.0 && b > 0.0) || a < floor || b < floor) {
    throw DensityFloorError("density below floor at step " + std::to_string(step) + " on edge (" +
                            std::to_string(edge.tail) + " -> " + std::to_string(edge.head) + ")");
  }
  return rho.k() * (0.5 / a + 0.5 / b);
}

Eigen::MatrixXd kinetic_weights(const DensityTrajectory& rho, const DirectedGraph& g,
                                double floor) {
  Eigen::MatrixXd w(g.n_edges(), rho.k());
  for (int i = 1; i <= rho.k(); ++i) {
    for (EdgeId e = 0; e < g.n_edges(); ++e) w(e, i - 1) = kinetic_weight(rho, g.edge(e), i, floor);
  }
  return w;
}

double action(const DensityTrajectory& rho, const MomentumTrajectory& m, const DirectedGraph& g,
              double floor) {
  check_shapes(rho, m, g);
  double total = 0.0;
  for (int i = 1; i <= m.k(); ++i) {
    for (EdgeId e = 0; e < g.n_edges(); ++e) {
      const double flux = m.steps(e, i - 1);
      if (flux == 0.0) continue;
      total += 0.5 * kinetic_weight(rho, g.edge(e), i, floor) * flux * flux;
    }
  }
  return total;
}

Eigen::MatrixXd continuity_residual(const DensityTrajectory& rho, const MomentumTrajectory& m,
                                    const DirectedGraph& g) {
  check_shapes(rho, m, g);
  Eigen::MatrixXd r(g.n_vertices(), m.k());
  for (int i = 1; i <= m.k(); ++i) {
    r.col(i - 1) = g.divergence(m.step(i)) - (rho.snapshot(i) - rho.snapshot(i - 1));
  }
  return r;
}

}  // namespace fdot
