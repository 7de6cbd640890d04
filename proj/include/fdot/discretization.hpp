#pragma once

// Midpoint-in-time discretization of the graph transport action.
//
// Densities live at snapshots t_i = i/k (i = 0..k), momenta at the midpoints
// tau_i = (i - 1/2)/k (i = 1..k). Step i moves mass from snapshot i-1 to
// snapshot i, and an oriented edge (a -> b) sees the tail density of the
// previous snapshot and the head density of the current one.

#include <stdexcept>

#include <Eigen/Core>

#include "fdot/graph.hpp"

namespace fdot {

class DensityFloorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimeGrid {
  int k = 1;

  explicit TimeGrid(int intervals);
  double snapshot_time(int i) const { return static_cast<double>(i) / k; }
  double midpoint_time(int i) const { return (i - 0.5) / k; }
};

// Column i holds snapshot rho_i, i = 0..k.
struct DensityTrajectory {
  Eigen::MatrixXd snapshots;

  int k() const { return static_cast<int>(snapshots.cols()) - 1; }
  int n_vertices() const { return static_cast<int>(snapshots.rows()); }
  auto snapshot(int i) const { return snapshots.col(i); }
  auto snapshot(int i) { return snapshots.col(i); }
};

// Column i-1 holds m_i, i = 1..k.
struct MomentumTrajectory {
  Eigen::MatrixXd steps;

  int k() const { return static_cast<int>(steps.cols()); }
  int n_edges() const { return static_cast<int>(steps.rows()); }
  auto step(int i) const { return steps.col(i - 1); }
  auto step(int i) { return steps.col(i - 1); }
};

// Snapshots rho_i = rho_0 + (i/k)(rho_k - rho_0).
DensityTrajectory linear_interpolation(const Eigen::VectorXd& rho0, const Eigen::VectorXd& rhok,
                                       int k);

// (rho_{i-1}(tail) + rho_i(head)) / 2.
double midpoint_density(const DensityTrajectory& rho, const Edge& edge, int step);
// All midpoint densities, n_edges x k.
Eigen::MatrixXd midpoint_densities(const DensityTrajectory& rho, const DirectedGraph& g);

// k (1/(2 rho_{i-1}(tail)) + 1/(2 rho_i(head))). Throws DensityFloorError if
// either density is below `floor` or not positive.
double kinetic_weight(const DensityTrajectory& rho, const Edge& edge, int step, double floor = 0.0);
Eigen::MatrixXd kinetic_weights(const DensityTrajectory& rho, const DirectedGraph& g,
                                double floor = 0.0);

// 1/2 sum_i m_i^T W_i(rho) m_i, summed in (step, edge) order.
double action(const DensityTrajectory& rho, const MomentumTrajectory& m, const DirectedGraph& g,
              double floor = 0.0);

// Blocks D^T m_i - (rho_i - rho_{i-1}), n_vertices x k.
Eigen::MatrixXd continuity_residual(const DensityTrajectory& rho, const MomentumTrajectory& m,
                                    const DirectedGraph& g);

}  // namespace fdot
