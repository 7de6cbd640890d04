#include "fdot/fundamental_diagram.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fdot {

FdParams FdParams::uniform(int n_edges, int k, double v0, double rho_hat, Enforcement enforcement) {
  FdParams p;
  p.v0 = Eigen::MatrixXd::Constant(n_edges, k, v0);
  p.rho_hat = Eigen::MatrixXd::Constant(n_edges, k, rho_hat);
  p.enforcement = enforcement;
  p.validate();
  return p;
}

bool FdParams::enforced(int step) const {
  if (enforcement == Enforcement::AllSteps) return true;
  return step > 1 && step < k();
}

Greenshields FdParams::curve(EdgeId e, int step) const {
  return {v0(e, step - 1), rho_hat(e, step - 1)};
}

void FdParams::validate() const {
  if (v0.rows() != rho_hat.rows() || v0.cols() != rho_hat.cols()) {
    throw std::invalid_argument("fd: v0 and rho_hat shapes differ");
  }
  for (Eigen::Index j = 0; j < v0.cols(); ++j) {
    for (Eigen::Index e = 0; e < v0.rows(); ++e) {
      if (!(std::isfinite(v0(e, j)) && v0(e, j) > 0.0)) {
        throw std::invalid_argument("fd: v0 must be positive (edge " + std::to_string(e) +
                                    ", step " + std::to_string(j + 1) + ")");
      }
      if (!(std::isfinite(rho_hat(e, j)) && rho_hat(e, j) > 0.0)) {
        throw std::invalid_argument("fd: rho_hat must be positive (edge " + std::to_string(e) +
                                    ", step " + std::to_string(j + 1) + ")");
      }
    }
  }
}

double capacity(const FdParams& params, EdgeId edge, int step, double rho_bar) {
  return saturated_capacity(params.curve(edge, step), rho_bar);
}

Eigen::MatrixXd project_fd_set(const Eigen::MatrixXd& x, const Eigen::MatrixXd& rho_bar,
                               const FdParams& params) {
  if (x.rows() != params.n_edges() || x.cols() != params.k() || rho_bar.rows() != x.rows() ||
      rho_bar.cols() != x.cols()) {
    throw std::invalid_argument("project_fd_set: dimension mismatch");
  }
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (int i = 1; i <= params.k(); ++i) {
    const bool on = params.enforced(i);
    for (EdgeId e = 0; e < params.n_edges(); ++e) {
      const double v = x(e, i - 1);
      out(e, i - 1) =
          on ? project_box(v, capacity(params, e, i, rho_bar(e, i - 1))) : std::max(v, 0.0);
    }
  }
  return out;
}

Eigen::MatrixXd project_fd_set(const Eigen::MatrixXd& x, const DensityTrajectory& rho,
                               const DirectedGraph& g, const FdParams& params) {
  return project_fd_set(x, midpoint_densities(rho, g), params);
}

namespace {

// Real roots of c3 r^3 + c2 r^2 + c1 r + c0 inside [lo, hi], found by
// bracketing between the cubic's critical points.
int cubic_roots_in(const std::array<double, 4>& c, double lo, double hi, std::array<double, 3>& out) {
  auto p = [&](double r) { return ((c[3] * r + c[2]) * r + c[1]) * r + c[0]; };
  std::array<double, 4> marks{lo, hi, lo, lo};
  int n_marks = 2;
  const double qa = 3.0 * c[3], qb = 2.0 * c[2], qc = c[1];
  if (qa != 0.0) {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc > 0.0) {
      const double s = std::sqrt(disc);
      // Numerically stable quadratic roots.
      const double t = -0.5 * (qb + std::copysign(s, qb));
      for (double r : {t / qa, t != 0.0 ? qc / t : lo}) {
        if (r > lo && r < hi) marks[static_cast<std::size_t>(n_marks++)] = r;
      }
    }
  } else if (qb != 0.0) {
    const double r = -qc / qb;
    if (r > lo && r < hi) marks[static_cast<std::size_t>(n_marks++)] = r;
  }
  std::sort(marks.begin(), marks.begin() + n_marks);

  int found = 0;
  for (int j = 0; j + 1 < n_marks && found < 3; ++j) {
    double a = marks[static_cast<std::size_t>(j)], b = marks[static_cast<std::size_t>(j + 1)];
    double pa = p(a), pb = p(b);
    if (pa == 0.0) {
      out[static_cast<std::size_t>(found++)] = a;
      continue;
    }
    if ((pa < 0.0) == (pb < 0.0)) continue;
    // Newton inside the bracket, bisection whenever Newton leaves it.
    double r = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it) {
      const double pr = p(r);
      if (pr == 0.0) {
        a = b = r;
        break;
      }
      if ((pr < 0.0) == (pa < 0.0)) {
        a = r;
        pa = pr;
      } else {
        b = r;
      }
      const double dp = (3.0 * c[3] * r + 2.0 * c[2]) * r + c[1];
      double next = dp != 0.0 ? r - pr / dp : a;
      if (!(next > a && next < b)) next = 0.5 * (a + b);
      if (next == r || next <= a || next >= b) break;
      r = next;
    }
    out[static_cast<std::size_t>(found++)] = a == b ? a : r;
  }
  return found;
}

}  // namespace

HypographPoint project_hypograph(const Greenshields& curve, double rho, double flux,
                                 double rho_weight, double flux_weight) {
  const double jam = curve.rho_hat;
  if (flux >= 0.0 && flux <= curve.flux(rho) && rho >= 0.0 && rho <= jam) return {rho, flux};

  auto cost = [&](double r, double f) {
    return rho_weight * (r - rho) * (r - rho) + flux_weight * (f - flux) * (f - flux);
  };

  // Bottom edge f = 0, r in [0, jam].
  HypographPoint best{std::clamp(rho, 0.0, jam), 0.0};
  double best_cost = cost(best.rho, best.flux);

  // Arc f = Q(r): stationarity of rho_weight (r - rho)^2 + flux_weight (Q(r) - flux)^2.
  const double a = curve.v0;
  const double b = curve.v0 / curve.rho_hat;
  const std::array<double, 4> c{
      -rho_weight * rho - flux_weight * a * flux,
      rho_weight + flux_weight * (a * a + 2.0 * b * flux),
      -3.0 * flux_weight * a * b,
      2.0 * flux_weight * b * b,
  };
  std::array<double, 3> roots{};
  const int n_roots = cubic_roots_in(c, 0.0, jam, roots);
  for (int j = 0; j < n_roots; ++j) {
    const double r = roots[static_cast<std::size_t>(j)];
    const double f = std::max(curve.flux(r), 0.0);
    const double cst = cost(r, f);
    if (cst < best_cost) {
      best_cost = cst;
      best = {r, f};
    }
  }
  return best;
}

}  // namespace fdot
