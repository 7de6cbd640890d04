#include "fdot/density_update.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fdot {

void solve_tridiagonal(std::vector<double>& diag, const std::vector<double>& off,
                       std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  if (n == 0) return;
  if (rhs.size() != n || off.size() + 1 != n) throw std::invalid_argument("tridiagonal: size mismatch");
  // Forward elimination; diag becomes the pivots.
  for (std::size_t j = 1; j < n; ++j) {
    const double factor = off[j - 1] / diag[j - 1];
    diag[j] -= factor * off[j - 1];
    rhs[j] -= factor * rhs[j - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t j = n - 1; j-- > 0;) rhs[j] = (rhs[j] - off[j] * rhs[j + 1]) / diag[j];
}

DensitySubproblem::DensitySubproblem(const DirectedGraph& graph, Eigen::VectorXd rho0,
                                     Eigen::VectorXd rhok, int k, double beta, double floor)
    : graph_(&graph),
      rho0_(std::move(rho0)),
      rhok_(std::move(rhok)),
      k_(k),
      n_(graph.n_vertices()),
      beta_(beta),
      floor_(floor) {
  if (k < 1) throw std::invalid_argument("density update needs k >= 1");
  if (rho0_.size() != n_ || rhok_.size() != n_) throw std::invalid_argument("marginal size mismatch");
  kinetic_ = Eigen::MatrixXd::Zero(n_, k_ - 1);
  divergence_ = Eigen::MatrixXd::Zero(n_, k_);
  lambda_ = Eigen::MatrixXd::Zero(n_, k_);
}

void DensitySubproblem::set_momentum(const Eigen::MatrixXd& m) {
  const auto& g = *graph_;
  if (m.rows() != g.n_edges() || m.cols() != k_) throw std::invalid_argument("momentum shape mismatch");
  const double quarter_k = 0.25 * k_;
  kinetic_.setZero();
  kinetic_constant_ = 0.0;
  for (int i = 1; i <= k_; ++i) {
    for (EdgeId e = 0; e < g.n_edges(); ++e) {
      const double c = quarter_k * m(e, i - 1) * m(e, i - 1);
      const auto& ed = g.edge(e);
      // Tail sees rho_{i-1}, head sees rho_i.
      if (i - 1 == 0) {
        kinetic_constant_ += c / rho0_[ed.tail];
      } else {
        kinetic_(ed.tail, i - 2) += c;
      }
      if (i == k_) {
        kinetic_constant_ += c / rhok_[ed.head];
      } else {
        kinetic_(ed.head, i - 1) += c;
      }
    }
    divergence_.col(i - 1) = g.divergence(m.col(i - 1));
  }
}

void DensitySubproblem::set_continuity_dual(const Eigen::MatrixXd& lambda) {
  if (lambda.rows() != n_ || lambda.cols() != k_) throw std::invalid_argument("lambda shape mismatch");
  lambda_ = lambda;
}

void DensitySubproblem::set_midpoint_coupling(std::vector<bool> enforced, Eigen::MatrixXd s,
                                              Eigen::MatrixXd psi, double eta) {
  if (static_cast<int>(enforced.size()) != k_ || s.rows() != graph_->n_edges() || s.cols() != k_ ||
      psi.rows() != s.rows() || psi.cols() != s.cols()) {
    throw std::invalid_argument("midpoint coupling shape mismatch");
  }
  enforced_ = std::move(enforced);
  s_ = std::move(s);
  psi_ = std::move(psi);
  eta_ = eta;
  coupled_ = eta > 0.0 && std::any_of(enforced_.begin(), enforced_.end(), [](bool b) { return b; });
}

void DensitySubproblem::clear_midpoint_coupling() {
  coupled_ = false;
  enforced_.clear();
}

double DensitySubproblem::snapshot(const Eigen::MatrixXd& interior, int j, VertexId v) const {
  if (j == 0) return rho0_[v];
  if (j == k_) return rhok_[v];
  return interior(v, j - 1);
}

double DensitySubproblem::value(const Eigen::MatrixXd& x) const {
  double f = kinetic_constant_;
  for (int j = 1; j < k_; ++j) {
    for (VertexId v = 0; v < n_; ++v) f += kinetic_(v, j - 1) / x(v, j - 1);
  }
  for (int i = 1; i <= k_; ++i) {
    for (VertexId v = 0; v < n_; ++v) {
      const double delta = snapshot(x, i, v) - snapshot(x, i - 1, v);
      const double u = divergence_(v, i - 1) - delta;
      f += -lambda_(v, i - 1) * delta + 0.5 * beta_ * u * u;
    }
  }
  if (coupled_) {
    const auto& g = *graph_;
    for (int i = 1; i <= k_; ++i) {
      if (!enforced_[static_cast<std::size_t>(i - 1)]) continue;
      for (EdgeId e = 0; e < g.n_edges(); ++e) {
        const auto& ed = g.edge(e);
        const double rbar = 0.5 * (snapshot(x, i - 1, ed.tail) + snapshot(x, i, ed.head));
        const double gap = s_(e, i - 1) - rbar;
        f += -psi_(e, i - 1) * rbar + 0.5 * eta_ * gap * gap;
      }
    }
  }
  return f;
}

double DensitySubproblem::change(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) const {
  // Term by term, so that differences far below the size of f survive.
  double df = 0.0;
  for (int j = 1; j < k_; ++j) {
    for (VertexId v = 0; v < n_; ++v) {
      const double a = x(v, j - 1), b = y(v, j - 1);
      df += kinetic_(v, j - 1) * (a - b) / (a * b);
    }
  }
  for (int i = 1; i <= k_; ++i) {
    for (VertexId v = 0; v < n_; ++v) {
      const double dx = snapshot(x, i, v) - snapshot(x, i - 1, v);
      const double dy = snapshot(y, i, v) - snapshot(y, i - 1, v);
      const double ux = divergence_(v, i - 1) - dx, uy = divergence_(v, i - 1) - dy;
      df += -lambda_(v, i - 1) * (dy - dx) + 0.5 * beta_ * (uy - ux) * (uy + ux);
    }
  }
  if (coupled_) {
    const auto& g = *graph_;
    for (int i = 1; i <= k_; ++i) {
      if (!enforced_[static_cast<std::size_t>(i - 1)]) continue;
      for (EdgeId e = 0; e < g.n_edges(); ++e) {
        const auto& ed = g.edge(e);
        const double rx = 0.5 * (snapshot(x, i - 1, ed.tail) + snapshot(x, i, ed.head));
        const double ry = 0.5 * (snapshot(y, i - 1, ed.tail) + snapshot(y, i, ed.head));
        const double gx = s_(e, i - 1) - rx, gy = s_(e, i - 1) - ry;
        df += -psi_(e, i - 1) * (ry - rx) + 0.5 * eta_ * (gy - gx) * (gy + gx);
      }
    }
  }
  return df;
}

Eigen::MatrixXd DensitySubproblem::gradient(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd grad(n_, std::max(k_ - 1, 0));
  for (int j = 1; j < k_; ++j) {
    for (VertexId v = 0; v < n_; ++v) {
      const double rho = x(v, j - 1);
      const double u_j = divergence_(v, j - 1) - (snapshot(x, j, v) - snapshot(x, j - 1, v));
      const double u_next = divergence_(v, j) - (snapshot(x, j + 1, v) - snapshot(x, j, v));
      grad(v, j - 1) = -kinetic_(v, j - 1) / (rho * rho) - lambda_(v, j - 1) + lambda_(v, j) -
                       beta_ * u_j + beta_ * u_next;
    }
  }
  if (coupled_) {
    const auto& g = *graph_;
    for (int i = 1; i <= k_; ++i) {
      if (!enforced_[static_cast<std::size_t>(i - 1)]) continue;
      for (EdgeId e = 0; e < g.n_edges(); ++e) {
        const auto& ed = g.edge(e);
        const double rbar = 0.5 * (snapshot(x, i - 1, ed.tail) + snapshot(x, i, ed.head));
        const double half_slope = 0.5 * (-psi_(e, i - 1) - eta_ * (s_(e, i - 1) - rbar));
        if (i - 1 >= 1) grad(ed.tail, i - 2) += half_slope;
        if (i <= k_ - 1) grad(ed.head, i - 1) += half_slope;
      }
    }
  }
  return grad;
}

Eigen::MatrixXd DensitySubproblem::dense_hessian(const Eigen::MatrixXd& x) const {
  const int nv = n_ * (k_ - 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(nv, nv);
  auto var = [this](int j, VertexId v) { return (j - 1) * n_ + v; };
  for (int j = 1; j < k_; ++j) {
    for (VertexId v = 0; v < n_; ++v) {
      const double rho = x(v, j - 1);
      h(var(j, v), var(j, v)) += 2.0 * kinetic_(v, j - 1) / (rho * rho * rho) + 2.0 * beta_;
      if (j + 1 < k_) {
        h(var(j, v), var(j + 1, v)) -= beta_;
        h(var(j + 1, v), var(j, v)) -= beta_;
      }
    }
  }
  if (coupled_) {
    const auto& g = *graph_;
    const double w = 0.25 * eta_;
    for (int i = 1; i <= k_; ++i) {
      if (!enforced_[static_cast<std::size_t>(i - 1)]) continue;
      for (EdgeId e = 0; e < g.n_edges(); ++e) {
        const auto& ed = g.edge(e);
        const bool has_tail = i - 1 >= 1, has_head = i <= k_ - 1;
        if (has_tail) h(var(i - 1, ed.tail), var(i - 1, ed.tail)) += w;
        if (has_head) h(var(i, ed.head), var(i, ed.head)) += w;
        if (has_tail && has_head) {
          h(var(i - 1, ed.tail), var(i, ed.head)) += w;
          h(var(i, ed.head), var(i - 1, ed.tail)) += w;
        }
      }
    }
  }
  return h;
}

Eigen::VectorXd DensitySubproblem::newton_direction_tridiagonal(const Eigen::MatrixXd& x,
                                                                const Eigen::MatrixXd& grad,
                                                                const std::vector<char>& active) const {
  const int steps = k_ - 1;
  Eigen::VectorXd d(n_ * steps);
  std::vector<double> diag(static_cast<std::size_t>(steps)), off(static_cast<std::size_t>(steps - 1)),
      rhs(static_cast<std::size_t>(steps));
  for (VertexId v = 0; v < n_; ++v) {
    for (int j = 1; j <= steps; ++j) {
      const auto jj = static_cast<std::size_t>(j - 1);
      const bool act = active[static_cast<std::size_t>((j - 1) * n_ + v)] != 0;
      const double rho = x(v, j - 1);
      diag[jj] = act ? 1.0 : 2.0 * kinetic_(v, j - 1) / (rho * rho * rho) + 2.0 * beta_;
      rhs[jj] = act ? 0.0 : -grad(v, j - 1);
      if (j < steps) {
        const bool act_next = active[static_cast<std::size_t>(j * n_ + v)] != 0;
        off[jj] = (act || act_next) ? 0.0 : -beta_;
      }
    }
    solve_tridiagonal(diag, off, rhs);
    for (int j = 1; j <= steps; ++j) d[(j - 1) * n_ + v] = rhs[static_cast<std::size_t>(j - 1)];
  }
  return d;
}

Eigen::VectorXd DensitySubproblem::newton_direction_sparse(const Eigen::MatrixXd& x,
                                                           const Eigen::MatrixXd& grad,
                                                           const std::vector<char>& active) {
  const auto& g = *graph_;
  const int nv = n_ * (k_ - 1);
  auto var = [this](int j, VertexId v) { return (j - 1) * n_ + v; };
  auto is_active = [&](int p) { return active[static_cast<std::size_t>(p)] != 0; };

  // The triplet list always has the same entries in the same order so the
  // symbolic analysis can be reused; deactivated couplings are explicit zeros.
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(3 * nv + 4 * g.n_edges() * k_));
  for (int j = 1; j < k_; ++j) {
    for (VertexId v = 0; v < n_; ++v) {
      const int p = var(j, v);
      const double rho = x(v, j - 1);
      t.emplace_back(p, p, is_active(p) ? 1.0 : 2.0 * kinetic_(v, j - 1) / (rho * rho * rho) + 2.0 * beta_);
      if (j + 1 < k_) {
        const int q = var(j + 1, v);
        const double val = (is_active(p) || is_active(q)) ? 0.0 : -beta_;
        t.emplace_back(p, q, val);
        t.emplace_back(q, p, val);
      }
    }
  }
  const double w = 0.25 * eta_;
  for (int i = 1; i <= k_; ++i) {
    if (!enforced_[static_cast<std::size_t>(i - 1)]) continue;
    for (EdgeId e = 0; e < g.n_edges(); ++e) {
      const auto& ed = g.edge(e);
      const bool has_tail = i - 1 >= 1, has_head = i <= k_ - 1;
      const int p = has_tail ? var(i - 1, ed.tail) : -1;
      const int q = has_head ? var(i, ed.head) : -1;
      if (has_tail) t.emplace_back(p, p, is_active(p) ? 0.0 : w);
      if (has_head) t.emplace_back(q, q, is_active(q) ? 0.0 : w);
      if (has_tail && has_head) {
        const double val = (is_active(p) || is_active(q)) ? 0.0 : w;
        t.emplace_back(p, q, val);
        t.emplace_back(q, p, val);
      }
    }
  }
  Eigen::SparseMatrix<double> h(nv, nv);
  h.setFromTriplets(t.begin(), t.end());
  if (!ldlt_ || !pattern_ready_) {
    ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    ldlt_->analyzePattern(h);
    pattern_ready_ = true;
  }
  ldlt_->factorize(h);
  if (ldlt_->info() != Eigen::Success) throw std::runtime_error("density Newton system is not SPD");

  Eigen::VectorXd rhs(nv);
  for (int p = 0; p < nv; ++p) rhs[p] = is_active(p) ? 0.0 : -grad.data()[p];
  return ldlt_->solve(rhs);
}

NewtonReport DensitySubproblem::minimize(Eigen::MatrixXd& x, int max_iters, double tol) {
  NewtonReport report;
  if (k_ < 2) {
    report.converged = true;
    return report;
  }
  if (x.rows() != n_ || x.cols() != k_ - 1) throw std::invalid_argument("interior shape mismatch");
  x = x.cwiseMax(floor_);

  constexpr double kArmijo = 1e-4;
  constexpr double kShrink = 0.1;
  for (int it = 0; it <= max_iters; ++it) {
    const Eigen::MatrixXd grad = gradient(x);
    const Eigen::MatrixXd projected = x - (x - grad).cwiseMax(floor_);
    const double pg = projected.cwiseAbs().maxCoeff();
    report.projected_gradient = pg;
    if (pg < tol) {
      report.converged = true;
      break;
    }
    if (it == max_iters) break;

    const double band = std::min(floor_, pg);
    std::vector<char> active(static_cast<std::size_t>(x.size()));
    for (Eigen::Index p = 0; p < x.size(); ++p) {
      active[static_cast<std::size_t>(p)] = x.data()[p] <= floor_ + band && grad.data()[p] > 0.0;
    }
    const Eigen::VectorXd d =
        coupled_ ? newton_direction_sparse(x, grad, active) : newton_direction_tridiagonal(x, grad, active);
    const Eigen::Map<const Eigen::MatrixXd> dir(d.data(), n_, k_ - 1);
    // The gradient carries c / rho^2 terms and cannot get below tol in
    // absolute terms when some density is tiny; a Newton step below tol can.
    if (dir.cwiseAbs().maxCoeff() < tol) {
      x = (x + dir).cwiseMax(floor_);
      report.converged = true;
      break;
    }

    double alpha = 1.0;
    bool accepted = false;
    Eigen::MatrixXd trial;
    // No coordinate may drop below a tenth of its value in one step. Newton
    // on c / rho recovers from an undershoot by at most a factor 3/2 per
    // step, so overshooting to the floor would cost dozens of iterations.
    const Eigen::MatrixXd lower = (kShrink * x).cwiseMax(floor_);
    while (alpha > 1e-20) {
      trial = (x + alpha * dir).cwiseMax(lower);
      const double decrease = (grad.array() * (trial - x).array()).sum();
      if (change(x, trial) <= kArmijo * decrease) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++report.iterations;
    if (!accepted) {
      report.line_search_failed = true;
      break;
    }
    if (trial == x) break;
    x = std::move(trial);
  }
  return report;
}

}  // namespace fdot
