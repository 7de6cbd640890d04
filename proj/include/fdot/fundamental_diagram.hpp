#pragma once

// Fundamental-diagram capacity: per edge (and optionally per step) a concave
// flux bound Q(rho) vanishing at zero and jam density, plus the projections
// used by the capacity-copy update.

#include <concepts>

#include <Eigen/Core>

#include "fdot/discretization.hpp"
#include "fdot/graph.hpp"

namespace fdot {

// A concave flux-density relation with Q(0) = Q(jam) = 0.
template <class C>
concept CapacityCurve = requires(const C& c, double rho) {
  { c.flux(rho) } -> std::convertible_to<double>;
  { c.jam_density() } -> std::convertible_to<double>;
};

struct Greenshields {
  double v0 = 1.0;       // free-flow speed
  double rho_hat = 1.0;  // jam density

  // Unsaturated parabola v0 rho (1 - rho/rho_hat); negative outside [0, rho_hat].
  double flux(double rho) const { return v0 * rho * (1.0 - rho / rho_hat); }
  double slope(double rho) const { return v0 * (1.0 - 2.0 * rho / rho_hat); }
  double jam_density() const { return rho_hat; }
  double critical_density() const { return 0.5 * rho_hat; }
  double max_flux() const { return 0.25 * v0 * rho_hat; }
};
static_assert(CapacityCurve<Greenshields>);

// Saturating evaluation: max(0, Q(rho)) so iterates past jam density keep a
// nonempty feasible interval {0}.
template <CapacityCurve C>
double saturated_capacity(const C& curve, double rho) {
  const double q = curve.flux(rho);
  return q > 0.0 ? q : 0.0;
}

enum class Enforcement { AllSteps, InteriorSteps };

struct FdParams {
  Eigen::MatrixXd v0;       // n_edges x k
  Eigen::MatrixXd rho_hat;  // n_edges x k
  Enforcement enforcement = Enforcement::InteriorSteps;

  static FdParams uniform(int n_edges, int k, double v0, double rho_hat,
                          Enforcement enforcement = Enforcement::InteriorSteps);

  int n_edges() const { return static_cast<int>(v0.rows()); }
  int k() const { return static_cast<int>(v0.cols()); }
  // Interior enforcement exempts the first and last step.
  bool enforced(int step) const;
  Greenshields curve(EdgeId e, int step) const;
  // Throws std::invalid_argument on non-positive or non-finite parameters.
  void validate() const;
};

double capacity(const FdParams& params, EdgeId edge, int step, double rho_bar);

// Clamp onto [0, upper].
inline double project_box(double x, double upper) {
  return x < 0.0 ? 0.0 : (x > upper ? upper : x);
}

// Elementwise clamp of x (n_edges x k) onto [0, Q_e(rho_bar_{e,i})] on
// enforced steps and onto [0, inf) elsewhere.
Eigen::MatrixXd project_fd_set(const Eigen::MatrixXd& x, const Eigen::MatrixXd& rho_bar,
                               const FdParams& params);
Eigen::MatrixXd project_fd_set(const Eigen::MatrixXd& x, const DensityTrajectory& rho,
                               const DirectedGraph& g, const FdParams& params);

struct HypographPoint {
  double rho = 0.0;
  double flux = 0.0;
};

// Weighted Euclidean projection of (rho, flux) onto the closed convex set
// {(r, f) : 0 <= f <= Q(r)}, minimizing
//   rho_weight (r - rho)^2 + flux_weight (f - flux)^2.
HypographPoint project_hypograph(const Greenshields& curve, double rho, double flux,
                                 double rho_weight, double flux_weight);

}  // namespace fdot
