#pragma once

// The density block of the splitting: for fixed momenta m and duals, minimize
// over the interior snapshots rho_1..rho_{k-1}
//
//   1/2 m^T W(rho) m - lambda^T Delta(rho) + beta/2 ||D m - Delta(rho)||^2
//     + sum_{enforced (e,i)} [ -psi_{e,i} rbar_{e,i} + eta/2 (s_{e,i} - rbar_{e,i})^2 ]
//
// subject to rho >= floor, where rbar is the midpoint density. The last line
// is present only with joint FD coupling.
//
// Without that line the Hessian is diagonal (kinetic part) plus the time
// second-difference from Delta, so it splits into one tridiagonal system per
// vertex. The midpoint coupling links (tail, i-1) with (head, i) and the
// Newton system is then solved as one sparse SPD system.

#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "fdot/graph.hpp"

namespace fdot {

struct NewtonReport {
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  double projected_gradient = 0.0;
};

// Solves a symmetric tridiagonal system in place (Thomas algorithm).
// diag has n entries, off has n-1 entries (sub = super diagonal), rhs is
// overwritten with the solution.
void solve_tridiagonal(std::vector<double>& diag, const std::vector<double>& off,
                       std::vector<double>& rhs);

class DensitySubproblem {
 public:
  DensitySubproblem(const DirectedGraph& graph, Eigen::VectorXd rho0, Eigen::VectorXd rhok, int k,
                    double beta, double floor);

  // m: n_edges x k. Recomputes the kinetic coefficients and divergences.
  void set_momentum(const Eigen::MatrixXd& m);
  // lambda: n_vertices x k.
  void set_continuity_dual(const Eigen::MatrixXd& lambda);
  // Enables the midpoint consensus term on steps where enforced[i-1] is true.
  // s and psi are n_edges x k.
  void set_midpoint_coupling(std::vector<bool> enforced, Eigen::MatrixXd s, Eigen::MatrixXd psi,
                             double eta);
  void clear_midpoint_coupling();

  int n_vertices() const { return n_; }
  int k() const { return k_; }
  double floor() const { return floor_; }
  bool coupled() const { return coupled_; }

  // interior: n_vertices x (k-1), column j-1 is rho_j.
  double value(const Eigen::MatrixXd& interior) const;
  // value(y) - value(x), accurate when the two are close.
  double change(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) const;
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& interior) const;
  // Dense Hessian in column-major variable order (vertex fastest); for tests.
  Eigen::MatrixXd dense_hessian(const Eigen::MatrixXd& interior) const;

  // Projected Newton with Armijo backtracking (factor 1/2, constant 1e-4)
  // along the projection arc onto {rho >= floor}; no step shrinks a density
  // below a tenth of its value. Stops when the projected gradient or the
  // Newton step drops below tol in the infinity norm.
  NewtonReport minimize(Eigen::MatrixXd& interior, int max_iters, double tol);

 private:
  double snapshot(const Eigen::MatrixXd& interior, int j, VertexId v) const;
  Eigen::VectorXd newton_direction_tridiagonal(const Eigen::MatrixXd& interior,
                                               const Eigen::MatrixXd& grad,
                                               const std::vector<char>& active) const;
  Eigen::VectorXd newton_direction_sparse(const Eigen::MatrixXd& interior,
                                          const Eigen::MatrixXd& grad,
                                          const std::vector<char>& active);

  const DirectedGraph* graph_;
  Eigen::VectorXd rho0_, rhok_;
  int k_;
  int n_;
  double beta_;
  double floor_;

  Eigen::MatrixXd kinetic_;       // n x (k-1): coefficient c with kinetic term c / rho
  double kinetic_constant_ = 0.0;  // terms touching only the fixed endpoints
  Eigen::MatrixXd divergence_;    // n x k: D^T m_i
  Eigen::MatrixXd lambda_;        // n x k

  bool coupled_ = false;
  std::vector<bool> enforced_;
  Eigen::MatrixXd s_, psi_;
  double eta_ = 0.0;

  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
  bool pattern_ready_ = false;
};

}  // namespace fdot
