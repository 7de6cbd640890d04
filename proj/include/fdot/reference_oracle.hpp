#pragma once

// Independent solvers for the same convex program, used to check the ADMM
// solver on small instances. Neither shares code with the splitting.
//
// The program, in x = [interior densities; momenta]:
//   minimize   sum_{e,i} (k/4) m_{e,i}^2 (1/rho_{i-1}(tail) + 1/rho_i(head))
//   subject to D^T m_i = rho_i - rho_{i-1}      (i = 1..k)
//              rho >= floor, m >= 0
//              m_{e,i} <= v0 rbar - (v0/rho_hat) rbar^2   on enforced steps
//
// solve_barrier: log-barrier interior point method, Newton steps in a
// nullspace basis of the equality constraints, max-min-slack phase 1.
// solve_exhaustive: nested grid search over the nullspace coordinates; only
// for nullspace dimension <= 6.

#include <optional>
#include <string>

#include <Eigen/Core>

#include "fdot/discretization.hpp"
#include "fdot/fundamental_diagram.hpp"
#include "fdot/graph.hpp"

namespace fdot {

enum class OracleStatus { Optimal, Infeasible, NotConverged, Refused };

std::string to_string(OracleStatus status);

struct OracleCertificate {
  double duality_gap = 0.0;          // barrier bound m_ineq / t
  double stationarity = 0.0;         // ||Z^T (grad f - sum nu grad g)||_inf
  double continuity_residual = 0.0;  // ||A x - b||_inf
  double fd_violation = 0.0;         // max(0, -min constraint value)
};

struct OracleResult {
  OracleStatus status = OracleStatus::NotConverged;
  DensityTrajectory rho;
  MomentumTrajectory momentum;
  double objective = 0.0;
  int iterations = 0;  // Newton steps or grid levels
  int nullspace_dim = 0;
  OracleCertificate certificate;
  std::string message;
};

struct BarrierOptions {
  double rho_floor = 0.0;  // 0: 1e-8 * mass / n
  double gap_rel = 1e-11;  // stop when m_ineq / t <= gap_rel * max(1, f)
  double mu = 10.0;
  int max_newton = 5000;
  int max_variables = 4000;
};

struct ExhaustiveOptions {
  double rho_floor = 0.0;
  int max_dim = 6;
  int grid = 0;              // points per dimension; 0 picks by dimension
  double resolution = 1e-13; // final half-width relative to the initial box
};

OracleResult solve_barrier(const DirectedGraph& graph, const Eigen::VectorXd& rho0,
                           const Eigen::VectorXd& rhok, int k, const std::optional<FdParams>& fd,
                           const BarrierOptions& options = {});

OracleResult solve_exhaustive(const DirectedGraph& graph, const Eigen::VectorXd& rho0,
                              const Eigen::VectorXd& rhok, int k, const std::optional<FdParams>& fd,
                              const ExhaustiveOptions& options = {});

}  // namespace fdot
