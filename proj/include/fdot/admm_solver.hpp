#pragma once

// Augmented-Lagrangian splitting for FD-constrained transport on graphs.
//
// One iteration updates, in order,
//   m        per-step SPD solve (W_i(rho) + beta D D^T + gamma I) m_i = rhs_i
//   q (, s)  projection onto the FD set
//   rho      projected Newton on the density subproblem
//   duals    lambda += beta (D^T m - Delta rho), phi += gamma (m - q)
//            [, psi += eta (s - midpoint(rho))]
// and stops once the primal residuals are below tol_primal and the relative
// objective change is below tol_obj.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fdot/density_update.hpp"
#include "fdot/discretization.hpp"
#include "fdot/fundamental_diagram.hpp"
#include "fdot/graph.hpp"
#include "fdot/scenario.hpp"
#include "fdot/settings.hpp"

namespace fdot {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double continuity_residual = 0.0;  // ||D m - Delta rho||_inf
  double consensus_residual = 0.0;   // ||m - q||_inf
  double midpoint_residual = 0.0;    // ||s - midpoint(rho)||_inf (joint coupling only)
  int newton_steps = 0;
};

struct SolverState {
  DensityTrajectory rho;  // endpoints fixed
  Eigen::MatrixXd m;      // n_edges x k
  Eigen::MatrixXd q;      // n_edges x k
  Eigen::MatrixXd lambda; // n_vertices x k
  Eigen::MatrixXd phi;    // n_edges x k
  Eigen::MatrixXd s;      // n_edges x k, midpoint-density copy (joint coupling)
  Eigen::MatrixXd psi;    // n_edges x k
  int iteration = 0;
  std::vector<IterationRecord> history;
  int line_search_failures = 0;
  double max_linear_residual = 0.0;  // ||M m - rhs|| / (1 + ||rhs||), last momentum update
};

struct Trajectory {
  DensityTrajectory rho;
  MomentumTrajectory momentum;  // the FD-feasible copy q
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double continuity_residual = 0.0;
  double consensus_residual = 0.0;
  double midpoint_residual = 0.0;
  std::vector<IterationRecord> history;
  SolverSettings settings;
  bool fd_active = false;
  int line_search_failures = 0;
};

class AdmmSolver {
 public:
  AdmmSolver(const DirectedGraph& graph, const Eigen::VectorXd& rho0, const Eigen::VectorXd& rhok,
             int k, std::optional<FdParams> fd, SolverSettings settings);
  explicit AdmmSolver(const Scenario& scenario);
  ~AdmmSolver();
  AdmmSolver(const AdmmSolver&) = delete;
  AdmmSolver& operator=(const AdmmSolver&) = delete;

  const DirectedGraph& graph() const { return *graph_; }
  const SolverSettings& settings() const { return settings_; }
  const std::optional<FdParams>& fd() const { return fd_; }
  int k() const { return k_; }
  double rho_floor() const { return floor_; }
  bool joint_coupling() const;

  // Linear interpolation of the marginals, zero momenta and duals.
  SolverState initial_state() const;
  // Random positive densities, random nonnegative fluxes, random duals.
  SolverState random_state(std::uint64_t seed) const;

  // Individual phases, exposed for testing. Each returns the new block and
  // leaves the state untouched.
  Eigen::MatrixXd update_momentum(const SolverState& state);
  // Capacity copy with rho frozen at the current iterate: clamp onto
  // [0, Q(midpoint(rho))].
  Eigen::MatrixXd update_capacity_copy(const SolverState& state) const;
  // Joint projection of (midpoint(rho) - psi/eta, m + phi/gamma) onto the
  // hypograph on enforced steps; returns (q, s).
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> update_capacity_joint(const SolverState& state) const;
  DensityTrajectory update_density(const SolverState& state, NewtonReport* report = nullptr);
  void update_duals(SolverState& state) const;

  // One full iteration in place; returns the record for it.
  IterationRecord iterate(SolverState& state);

  // Runs from initial_state() or from the given state.
  Trajectory solve();
  Trajectory solve(SolverState state,
                   const std::function<void(const IterationRecord&)>& on_iteration = {});

  // Objective 1/2 m^T W(rho) m at the iterate.
  double objective(const SolverState& state) const;

 private:
  struct MomentumSystem;

  void check_state(const SolverState& state) const;
  Trajectory finish(const SolverState& state, bool converged) const;
  std::vector<bool> enforced_steps() const;

  const DirectedGraph* graph_;
  Eigen::VectorXd rho0_, rhok_;
  int k_;
  std::optional<FdParams> fd_;
  SolverSettings settings_;
  double floor_;
  std::unique_ptr<MomentumSystem> momentum_;
  std::unique_ptr<DensitySubproblem> density_;
};

// Validates the scenario's feasibility preconditions and runs the solver.
Trajectory solve(const Scenario& scenario);

}  // namespace fdot
