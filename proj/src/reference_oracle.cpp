#include "fdot/reference_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "fdot/scenario.hpp"

namespace fdot {

std::string to_string(OracleStatus status) {
  switch (status) {
    case OracleStatus::Optimal: return "optimal";
    case OracleStatus::Infeasible: return "infeasible";
    case OracleStatus::NotConverged: return "not_converged";
    case OracleStatus::Refused: return "refused";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// coef * m^2 / rho, with rho a variable (r >= 0) or the constant rc.
struct Perspective {
  int m;
  int r;
  double rc;
  double coef;
};

// g(x) = alpha + sum a_l x_l - kappa (beta0 + sum w_l x_l)^2 over up to three
// variables (index -1 unused).
struct Constraint {
  double alpha = 0.0;
  std::array<int, 3> idx{-1, -1, -1};
  std::array<double, 3> a{};
  double kappa = 0.0;
  double beta0 = 0.0;
  std::array<double, 3> w{};
};

class Program {
 public:
  Program(const DirectedGraph& g, const Eigen::VectorXd& rho0_in, const Eigen::VectorXd& rhok_in, int k,
          const std::optional<FdParams>& fd, double floor_opt)
      : g_(g), k_(k), n_(g.n_vertices()), ne_(g.n_edges()) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (rho0_in.size() != n_ || rhok_in.size() != n_) throw std::invalid_argument("marginal size mismatch");
    mass_ = rho0_in.sum();
    floor_ = floor_opt > 0.0 ? floor_opt : 1e-8 * mass_ / n_;
    rho0_ = apply_density_floor(rho0_in, floor_);
    rhok_ = apply_density_floor(rhok_in, floor_);
    n_vars_ = n_ * (k - 1) + ne_ * k;

    // Equalities, one row per (step, vertex): D^T m_i - rho_i + rho_{i-1} = 0.
    A_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_) * k, n_vars_);
    b_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_) * k);
    for (int i = 1; i <= k; ++i) {
      const Eigen::Index row0 = static_cast<Eigen::Index>(i - 1) * n_;
      for (EdgeId e = 0; e < ne_; ++e) {
        A_(row0 + g.edge(e).head, m_index(e, i)) += 1.0;
        A_(row0 + g.edge(e).tail, m_index(e, i)) -= 1.0;
      }
      for (VertexId v = 0; v < n_; ++v) {
        if (i < k) A_(row0 + v, rho_index(v, i)) -= 1.0;
        else b_(row0 + v) += rhok_[v];
        if (i - 1 > 0) A_(row0 + v, rho_index(v, i - 1)) += 1.0;
        else b_(row0 + v) -= rho0_[v];
      }
    }

    for (int i = 1; i <= k; ++i) {
      for (EdgeId e = 0; e < ne_; ++e) {
        const auto& ed = g.edge(e);
        terms_.push_back(density_term(e, i, ed.tail, i - 1));
        terms_.push_back(density_term(e, i, ed.head, i));
      }
    }

    for (int j = 1; j < k; ++j) {
      for (VertexId v = 0; v < n_; ++v) {
        Constraint c;
        c.alpha = -floor_;
        c.idx[0] = rho_index(v, j);
        c.a[0] = 1.0;
        cons_.push_back(c);
      }
    }
    for (int i = 1; i <= k; ++i) {
      for (EdgeId e = 0; e < ne_; ++e) {
        Constraint c;
        c.idx[0] = m_index(e, i);
        c.a[0] = 1.0;
        cons_.push_back(c);
      }
    }
    if (fd) {
      for (int i = 1; i <= k; ++i) {
        if (!fd->enforced(i)) continue;
        for (EdgeId e = 0; e < ne_; ++e) {
          const double v0 = fd->v0(e, i - 1);
          const double jam = fd->rho_hat(e, i - 1);
          const auto& ed = g.edge(e);
          // g = v0 r - (v0/jam) r^2 - m, r = (rho_{i-1}(tail) + rho_i(head)) / 2.
          Constraint c;
          c.kappa = v0 / jam;
          int slot = 0;
          c.idx[slot] = m_index(e, i);
          c.a[slot] = -1.0;
          ++slot;
          auto add_density = [&](VertexId v, int snap) {
            if (snap == 0 || snap == k) {
              const double r = snap == 0 ? rho0_[v] : rhok_[v];
              c.alpha += 0.5 * v0 * r;
              c.beta0 += 0.5 * r;
            } else {
              c.idx[slot] = rho_index(v, snap);
              c.a[slot] = 0.5 * v0;
              c.w[slot] = 0.5;
              ++slot;
            }
          };
          add_density(ed.tail, i - 1);
          add_density(ed.head, i);
          cons_.push_back(c);
        }
      }
    }
  }

  int n_vars() const { return n_vars_; }
  int n() const { return n_; }
  int n_edges() const { return ne_; }
  int k() const { return k_; }
  double mass() const { return mass_; }
  double floor() const { return floor_; }
  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b() const { return b_; }
  const std::vector<Constraint>& constraints() const { return cons_; }
  bool is_density(int var) const { return var < n_ * (k_ - 1); }

  int rho_index(VertexId v, int snap) const { return (snap - 1) * n_ + v; }
  int m_index(EdgeId e, int step) const { return n_ * (k_ - 1) + (step - 1) * ne_ + e; }

  double objective(const Eigen::VectorXd& x) const {
    double f = 0.0;
    for (const auto& t : terms_) {
      const double r = t.r >= 0 ? x[t.r] : t.rc;
      f += t.coef * x[t.m] * x[t.m] / r;
    }
    return f;
  }

  void objective_derivatives(const Eigen::VectorXd& x, double scale, Eigen::VectorXd& grad,
                             Eigen::MatrixXd& hess) const {
    for (const auto& t : terms_) {
      const double m = x[t.m];
      const double c = scale * t.coef;
      if (t.r < 0) {
        grad[t.m] += 2.0 * c * m / t.rc;
        hess(t.m, t.m) += 2.0 * c / t.rc;
        continue;
      }
      const double r = x[t.r];
      grad[t.m] += 2.0 * c * m / r;
      grad[t.r] -= c * m * m / (r * r);
      hess(t.m, t.m) += 2.0 * c / r;
      hess(t.m, t.r) -= 2.0 * c * m / (r * r);
      hess(t.r, t.m) -= 2.0 * c * m / (r * r);
      hess(t.r, t.r) += 2.0 * c * m * m / (r * r * r);
    }
  }

  static double value(const Constraint& c, const Eigen::VectorXd& x) {
    double lin = c.alpha, inner = c.beta0;
    for (int l = 0; l < 3; ++l) {
      if (c.idx[l] < 0) continue;
      lin += c.a[l] * x[c.idx[l]];
      inner += c.w[l] * x[c.idx[l]];
    }
    return lin - c.kappa * inner * inner;
  }

  static std::array<double, 3> gradient(const Constraint& c, const Eigen::VectorXd& x) {
    double inner = c.beta0;
    for (int l = 0; l < 3; ++l) {
      if (c.idx[l] >= 0) inner += c.w[l] * x[c.idx[l]];
    }
    std::array<double, 3> gr{};
    for (int l = 0; l < 3; ++l) gr[l] = c.a[l] - 2.0 * c.kappa * inner * c.w[l];
    return gr;
  }

 private:
  Perspective density_term(EdgeId e, int step, VertexId v, int snap) const {
    Perspective p;
    p.m = m_index(e, step);
    p.coef = 0.25 * k_;
    if (snap == 0 || snap == k_) {
      p.r = -1;
      p.rc = snap == 0 ? rho0_[v] : rhok_[v];
    } else {
      p.r = rho_index(v, snap);
      p.rc = 0.0;
    }
    return p;
  }

  const DirectedGraph& g_;
  int k_, n_, ne_;
  int n_vars_ = 0;
  double mass_ = 0.0, floor_ = 0.0;
  Eigen::VectorXd rho0_, rhok_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  std::vector<Perspective> terms_;
  std::vector<Constraint> cons_;

 public:
  const Eigen::VectorXd& rho0() const { return rho0_; }
  const Eigen::VectorXd& rhok() const { return rhok_; }
};

struct Affine {
  Eigen::VectorXd xp;  // particular solution
  Eigen::MatrixXd Z;   // orthonormal nullspace basis
  double residual = 0.0;
};

Affine equality_parametrization(const Program& p) {
  Affine out;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(p.A().transpose());
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p.n_vars(), p.n_vars());
  out.Z = q.rightCols(p.n_vars() - rank);
  out.xp = p.A().completeOrthogonalDecomposition().solve(p.b());
  out.residual = p.A().rows() > 0 ? (p.A() * out.xp - p.b()).cwiseAbs().maxCoeff() : 0.0;
  return out;
}

void fill_trajectory(const Program& p, const Eigen::VectorXd& x, OracleResult& r) {
  const int n = p.n(), k = p.k(), ne = p.n_edges();
  r.rho.snapshots.resize(n, k + 1);
  r.rho.snapshots.col(0) = p.rho0();
  r.rho.snapshots.col(k) = p.rhok();
  for (int j = 1; j < k; ++j) {
    for (VertexId v = 0; v < n; ++v) r.rho.snapshots(v, j) = x[p.rho_index(v, j)];
  }
  r.momentum.steps.resize(ne, k);
  for (int i = 1; i <= k; ++i) {
    for (EdgeId e = 0; e < ne; ++e) r.momentum.steps(e, i - 1) = x[p.m_index(e, i)];
  }
  r.objective = p.objective(x);
  double viol = 0.0;
  for (const auto& c : p.constraints()) viol = std::max(viol, -Program::value(c, x));
  r.certificate.fd_violation = viol;
  r.certificate.continuity_residual =
      p.A().rows() > 0 ? (p.A() * x - p.b()).cwiseAbs().maxCoeff() : 0.0;
}

// Lawson-Hanson active set method for min ||a x - b|| subject to x >= 0.
Eigen::VectorXd nonnegative_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index n = a.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-14 * std::max(1.0, a.cwiseAbs().maxCoeff()) * std::max<Eigen::Index>(1, n);
  auto solve_passive = [&]() {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[j]) idx.push_back(j);
    }
    Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = a.col(idx[j]);
    const Eigen::VectorXd s = sub.completeOrthogonalDecomposition().solve(b);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
    for (std::size_t j = 0; j < idx.size(); ++j) full[idx[j]] = s[static_cast<Eigen::Index>(j)];
    return full;
  };
  for (int outer = 0; outer < 3 * n + 10; ++outer) {
    const Eigen::VectorXd w = a.transpose() * (b - a * x);
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && w[j] > tol && (best < 0 || w[j] > w[best])) best = j;
    }
    if (best < 0) break;
    passive[best] = true;
    for (int inner = 0; inner < 3 * n + 10; ++inner) {
      const Eigen::VectorXd s = solve_passive();
      double alpha = 1.0;
      bool clipped = false;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && s[j] <= 0.0) {
          alpha = std::min(alpha, x[j] / (x[j] - s[j]));
          clipped = true;
        }
      }
      if (!clipped) {
        x = s;
        break;
      }
      x += alpha * (s - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && x[j] <= tol) {
          passive[j] = false;
          x[j] = 0.0;
        }
      }
    }
  }
  return x;
}

// Log-barrier over z = y (main phase) or z = (y, s) (phase 1, minimizing the
// common slack shift s subject to g_j(x) + s > 0 and an upper momentum bound).
class Barrier {
 public:
  Barrier(const Program& p, const Affine& aff, bool phase1)
      : p_(p), aff_(aff), phase1_(phase1), dim_(static_cast<int>(aff.Z.cols()) + (phase1 ? 1 : 0)) {
    if (phase1_) {
      for (int v = 0; v < p.n_vars(); ++v) {
        if (p.is_density(v)) continue;
        Constraint c;
        c.alpha = 2.0 * p.mass();
        c.idx[0] = v;
        c.a[0] = -1.0;
        bounds_.push_back(c);
      }
    }
  }

  int dim() const { return dim_; }
  int n_ineq() const { return static_cast<int>(p_.constraints().size() + bounds_.size()); }

  Eigen::VectorXd x_of(const Eigen::VectorXd& z) const {
    return aff_.xp + aff_.Z * z.head(aff_.Z.cols());
  }
  double shift(const Eigen::VectorXd& z) const { return phase1_ ? z[dim_ - 1] : 0.0; }

  double min_slack(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd x = x_of(z);
    const double s = shift(z);
    double lo = kInf;
    for (const auto& c : p_.constraints()) lo = std::min(lo, Program::value(c, x) + s);
    for (const auto& c : bounds_) lo = std::min(lo, Program::value(c, x) + s);
    return lo;
  }

  double value(const Eigen::VectorXd& z, double t) const {
    const Eigen::VectorXd x = x_of(z);
    const double s = shift(z);
    double phi = phase1_ ? t * s : t * p_.objective(x);
    auto add = [&](const Constraint& c) {
      const double gv = Program::value(c, x) + s;
      phi = gv > 0.0 ? phi - std::log(gv) : kInf;
    };
    for (const auto& c : p_.constraints()) {
      add(c);
      if (!std::isfinite(phi)) return kInf;
    }
    for (const auto& c : bounds_) {
      add(c);
      if (!std::isfinite(phi)) return kInf;
    }
    return phi;
  }

  // Gradient in x-space (plus s) assembled, then reduced to z-space.
  void derivatives(const Eigen::VectorXd& z, double t, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    const int nx = p_.n_vars();
    const Eigen::VectorXd x = x_of(z);
    const double s = shift(z);
    Eigen::VectorXd gx = Eigen::VectorXd::Zero(nx);
    Eigen::MatrixXd hx = Eigen::MatrixXd::Zero(nx, nx);
    Eigen::VectorXd hxs = Eigen::VectorXd::Zero(nx);  // d^2 / dx ds
    double gs = phase1_ ? t : 0.0, hss = 0.0;
    if (!phase1_) p_.objective_derivatives(x, t, gx, hx);

    auto add = [&](const Constraint& c) {
      const double gv = Program::value(c, x) + s;
      const auto gr = Program::gradient(c, x);
      const double inv = 1.0 / gv, inv2 = inv * inv;
      for (int l = 0; l < 3; ++l) {
        if (c.idx[l] < 0) continue;
        gx[c.idx[l]] -= gr[l] * inv;
        for (int r = 0; r < 3; ++r) {
          if (c.idx[r] < 0) continue;
          // -log g: grad g grad g^T / g^2 - hess g / g, hess g = -2 kappa w w^T.
          hx(c.idx[l], c.idx[r]) += gr[l] * gr[r] * inv2 + 2.0 * c.kappa * c.w[l] * c.w[r] * inv;
        }
        hxs[c.idx[l]] += gr[l] * inv2;
      }
      gs -= inv;
      hss += inv2;
    };
    for (const auto& c : p_.constraints()) add(c);
    for (const auto& c : bounds_) add(c);

    const auto& Z = aff_.Z;
    const Eigen::Index ny = Z.cols();
    grad.resize(dim_);
    hess.resize(dim_, dim_);
    grad.head(ny) = Z.transpose() * gx;
    hess.topLeftCorner(ny, ny) = Z.transpose() * (hx * Z);
    if (phase1_) {
      grad[ny] = gs;
      hess.block(0, ny, ny, 1) = Z.transpose() * hxs;
      hess.block(ny, 0, 1, ny) = hess.block(0, ny, ny, 1).transpose();
      hess(ny, ny) = hss;
    }
  }

  // ||Z^T (grad f - sum nu_j grad g_j)||_inf with nu >= 0 fitted over the
  // constraints whose slack is below `active`.
  double kkt_residual(const Eigen::VectorXd& z, double active) const {
    const int nx = p_.n_vars();
    const Eigen::VectorXd x = x_of(z);
    Eigen::VectorXd gx = Eigen::VectorXd::Zero(nx);
    Eigen::MatrixXd unused = Eigen::MatrixXd::Zero(nx, nx);
    p_.objective_derivatives(x, 1.0, gx, unused);
    const Eigen::VectorXd gf = aff_.Z.transpose() * gx;
    std::vector<Eigen::VectorXd> cols;
    for (const auto& c : p_.constraints()) {
      if (Program::value(c, x) > active) continue;
      const auto gr = Program::gradient(c, x);
      Eigen::VectorXd col = Eigen::VectorXd::Zero(nx);
      for (int l = 0; l < 3; ++l) {
        if (c.idx[l] >= 0) col[c.idx[l]] += gr[l];
      }
      cols.push_back(aff_.Z.transpose() * col);
    }
    Eigen::MatrixXd g(gf.size(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) g.col(static_cast<Eigen::Index>(j)) = cols[j];
    return (gf - g * nonnegative_least_squares(g, gf)).cwiseAbs().maxCoeff();
  }

 private:
  const Program& p_;
  const Affine& aff_;
  bool phase1_;
  int dim_;
  std::vector<Constraint> bounds_;
};

struct CenteringOutcome {
  int steps = 0;
  bool stalled = false;
  double grad_norm = 0.0;
};

// Damped Newton on the barrier at fixed t. `stop` may end the loop early.
template <class Stop>
CenteringOutcome center(const Barrier& bar, Eigen::VectorXd& z, double t, int budget, Stop stop) {
  CenteringOutcome out;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double phi = bar.value(z, t);
  while (out.steps < budget) {
    bar.derivatives(z, t, grad, hess);
    out.grad_norm = grad.cwiseAbs().maxCoeff();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd d = -ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !d.allFinite()) {
      out.stalled = true;
      break;
    }
    const double decrement = -grad.dot(d);
    if (decrement < 0.0) {
      out.stalled = true;
      break;
    }
    // phi - phi* is about decrement / 2; below this it is lost in round-off.
    if (0.5 * decrement <= 1e-12 * std::max(1.0, std::abs(phi))) break;

    double alpha = 1.0;
    bool accepted = false;
    while (alpha > 1e-18) {
      const Eigen::VectorXd trial = z + alpha * d;
      if (bar.min_slack(trial) > 0.0) {
        const double phi_trial = bar.value(trial, t);
        if (phi_trial <= phi - 0.01 * alpha * decrement) {
          z = trial;
          phi = phi_trial;
          accepted = true;
          break;
        }
        // Round-off regime: the predicted decrease is below the resolution
        // of phi, so the point is centered as well as it can be.
        if (0.5 * decrement < 1e-9 * std::max(1.0, std::abs(phi)) && phi_trial <= phi + 1e-13 * std::max(1.0, std::abs(phi))) {
          z = trial;
          return out;
        }
      }
      alpha *= 0.5;
    }
    ++out.steps;
    if (!accepted) {
      out.stalled = true;
      break;
    }
    if (stop(z)) break;
  }
  return out;
}

}  // namespace

OracleResult solve_barrier(const DirectedGraph& graph, const Eigen::VectorXd& rho0,
                           const Eigen::VectorXd& rhok, int k, const std::optional<FdParams>& fd,
                           const BarrierOptions& options) {
  OracleResult result;
  const Program prog(graph, rho0, rhok, k, fd, options.rho_floor);
  if (prog.n_vars() > options.max_variables) {
    result.status = OracleStatus::Refused;
    result.message = "problem has " + std::to_string(prog.n_vars()) + " variables, limit " +
                     std::to_string(options.max_variables);
    return result;
  }
  if (std::abs(prog.rho0().sum() - prog.rhok().sum()) > 1e-9 * prog.mass()) {
    result.status = OracleStatus::Infeasible;
    result.message = "marginals carry different mass";
    return result;
  }
  const Affine aff = equality_parametrization(prog);
  result.nullspace_dim = static_cast<int>(aff.Z.cols());
  if (aff.residual > 1e-9 * std::max(1.0, prog.mass())) {
    result.status = OracleStatus::Infeasible;
    result.message = "continuity constraints are inconsistent";
    return result;
  }

  // Phase 1: drive the common slack shift below zero.
  Barrier ph1(prog, aff, true);
  Eigen::VectorXd z1 = Eigen::VectorXd::Zero(ph1.dim());
  z1[ph1.dim() - 1] = 0.0;
  z1[ph1.dim() - 1] = std::max(0.0, -ph1.min_slack(z1)) + 1.0;
  int budget = options.max_newton;
  bool feasible = false;
  for (double t = 1.0; budget > 0; t *= options.mu) {
    const auto oc = center(ph1, z1, t, budget, [&](const Eigen::VectorXd& z) {
      return ph1.shift(z) < 0.0;
    });
    budget -= oc.steps;
    result.iterations += oc.steps;
    if (ph1.shift(z1) < 0.0) {
      feasible = true;
      break;
    }
    if (ph1.n_ineq() / t < 1e-13 * std::max(1.0, prog.mass()) || oc.stalled) break;
  }
  if (!feasible) {
    result.status = budget > 0 ? OracleStatus::Infeasible : OracleStatus::NotConverged;
    result.message = "no strictly feasible point found";
    return result;
  }

  // Phase 2.
  Barrier ph2(prog, aff, false);
  Eigen::VectorXd z = z1.head(ph2.dim());
  const double f0 = prog.objective(ph2.x_of(z));
  double t = std::max(1.0, ph2.n_ineq() / std::max(std::abs(f0), 1e-12));
  result.status = OracleStatus::NotConverged;
  while (budget > 0) {
    const auto oc = center(ph2, z, t, budget, [](const Eigen::VectorXd&) { return false; });
    budget -= oc.steps;
    result.iterations += oc.steps;
    const double f = prog.objective(ph2.x_of(z));
    const double gap = ph2.n_ineq() / t;
    if (gap <= options.gap_rel * std::max(1.0, std::abs(f))) {
      result.status = OracleStatus::Optimal;
      break;
    }
    if (oc.stalled) {
      result.message = "centering stalled at t = " + std::to_string(t);
      break;
    }
    t *= options.mu;
  }
  if (budget <= 0 && result.status != OracleStatus::Optimal) result.message = "Newton budget exhausted";

  const Eigen::VectorXd x = ph2.x_of(z);
  fill_trajectory(prog, x, result);
  result.certificate.duality_gap = ph2.n_ineq() / t;
  result.certificate.stationarity = ph2.kkt_residual(z, 1e-7 * std::max(1.0, prog.mass()));
  return result;
}

namespace {

// Splits the variables into free coordinates y and basic ones solved from the
// continuity equations, x = offset + map * y. Variables early in `preference`
// become basic when they add rank.
struct Basis {
  std::vector<int> free;
  Eigen::VectorXd offset;
  Eigen::MatrixXd map;
  double residual = 0.0;
};

Basis choose_basis(const Program& p, const std::vector<int>& preference, Eigen::Index rank) {
  const Eigen::MatrixXd& a = p.A();
  const Eigen::Index rows = a.rows();
  Eigen::MatrixXd q(rows, rank);
  Eigen::Index found = 0;
  std::vector<int> basic;
  Basis out;
  for (int v : preference) {
    if (found == rank) {
      out.free.push_back(v);
      continue;
    }
    Eigen::VectorXd r = a.col(v);
    const double norm = r.norm();
    for (int pass = 0; pass < 2; ++pass) r -= q.leftCols(found) * (q.leftCols(found).transpose() * r);
    if (norm > 0.0 && r.norm() > 1e-9 * norm) {
      q.col(found++) = r / r.norm();
      basic.push_back(v);
    } else {
      out.free.push_back(v);
    }
  }
  std::sort(out.free.begin(), out.free.end());
  Eigen::MatrixXd ab(rows, static_cast<Eigen::Index>(basic.size()));
  Eigen::MatrixXd af(rows, static_cast<Eigen::Index>(out.free.size()));
  for (std::size_t j = 0; j < basic.size(); ++j) ab.col(static_cast<Eigen::Index>(j)) = a.col(basic[j]);
  for (std::size_t j = 0; j < out.free.size(); ++j) af.col(static_cast<Eigen::Index>(j)) = a.col(out.free[j]);
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ab);
  const Eigen::VectorXd xb = qr.solve(p.b());
  const Eigen::MatrixXd mb = -qr.solve(af);
  out.offset = Eigen::VectorXd::Zero(p.n_vars());
  out.map = Eigen::MatrixXd::Zero(p.n_vars(), static_cast<Eigen::Index>(out.free.size()));
  for (std::size_t j = 0; j < basic.size(); ++j) {
    out.offset[basic[j]] = xb[static_cast<Eigen::Index>(j)];
    out.map.row(basic[j]) = mb.row(static_cast<Eigen::Index>(j));
  }
  for (std::size_t j = 0; j < out.free.size(); ++j) out.map(out.free[j], static_cast<Eigen::Index>(j)) = 1.0;
  out.residual = rows > 0 ? (ab * xb - p.b()).cwiseAbs().maxCoeff() : 0.0;
  return out;
}

}  // namespace

OracleResult solve_exhaustive(const DirectedGraph& graph, const Eigen::VectorXd& rho0,
                              const Eigen::VectorXd& rhok, int k, const std::optional<FdParams>& fd,
                              const ExhaustiveOptions& options) {
  OracleResult result;
  const Program prog(graph, rho0, rhok, k, fd, options.rho_floor);
  const Affine aff = equality_parametrization(prog);
  const int dim = static_cast<int>(aff.Z.cols());
  result.nullspace_dim = dim;
  if (dim > options.max_dim) {
    result.status = OracleStatus::Refused;
    result.message = "nullspace dimension " + std::to_string(dim) + " exceeds " +
                     std::to_string(options.max_dim);
    return result;
  }
  if (aff.residual > 1e-9 * std::max(1.0, prog.mass())) {
    result.status = OracleStatus::Infeasible;
    result.message = "continuity constraints are inconsistent";
    return result;
  }
  const Eigen::Index rank = prog.n_vars() - dim;

  auto feasible_value = [&](const Eigen::VectorXd& x) {
    for (const auto& c : prog.constraints()) {
      if (Program::value(c, x) < 0.0) return kInf;
    }
    return prog.objective(x);
  };
  auto lower = [&](int v) { return prog.is_density(v) ? prog.floor() : 0.0; };

  if (dim == 0) {
    const double f = feasible_value(aff.xp);
    result.status = std::isfinite(f) ? OracleStatus::Optimal : OracleStatus::Infeasible;
    fill_trajectory(prog, aff.xp, result);
    return result;
  }

  int grid = options.grid;
  if (grid <= 0) grid = dim == 1 ? 41 : dim == 2 ? 21 : dim == 3 ? 11 : 5;
  if (grid % 2 == 0) ++grid;

  // Densities first, then momenta by their value in the minimum-norm
  // solution: variables likely to sit on a bound end up free, where the grid
  // reaches the bound exactly.
  std::vector<int> preference(static_cast<std::size_t>(prog.n_vars()));
  std::iota(preference.begin(), preference.end(), 0);
  std::stable_sort(preference.begin(), preference.end(), [&](int a, int b) {
    if (prog.is_density(a) != prog.is_density(b)) return prog.is_density(a);
    return aff.xp[a] > aff.xp[b];
  });

  Eigen::VectorXd best_x;
  double best_f = kInf;
  constexpr int kPasses = 8;
  for (int pass = 0; pass < kPasses; ++pass) {
    const Basis basis = choose_basis(prog, preference, rank);
    const int nf = static_cast<int>(basis.free.size());
    Eigen::VectorXd lo(nf), hi(nf), center(nf);
    for (int d = 0; d < nf; ++d) {
      lo[d] = lower(basis.free[static_cast<std::size_t>(d)]);
      hi[d] = prog.mass();
    }
    double frac;
    if (pass == 0) {
      center = 0.5 * (lo + hi);
      frac = 0.5;
    } else {
      for (int d = 0; d < nf; ++d) center[d] = best_x[basis.free[static_cast<std::size_t>(d)]];
      frac = 1e-3;
    }
    auto eval = [&](const Eigen::VectorXd& y) { return feasible_value(basis.offset + basis.map * y); };

    double center_f = eval(center);
    std::vector<int> counter(static_cast<std::size_t>(nf));
    Eigen::VectorXd y(nf), cand(nf);
    int cur_grid = grid;
    while (frac > options.resolution) {
      double level_f = center_f;
      Eigen::VectorXd level_y = center;
      std::fill(counter.begin(), counter.end(), 0);
      bool done = false;
      while (!done) {
        for (int d = 0; d < nf; ++d) {
          const double h = frac * (hi[d] - lo[d]);
          const double a = std::max(lo[d], center[d] - h), b = std::min(hi[d], center[d] + h);
          y[d] = a + (b - a) * counter[static_cast<std::size_t>(d)] / (cur_grid - 1);
        }
        const double f = eval(y);
        if (f < level_f) {
          level_f = f;
          level_y = y;
        }
        int d = 0;
        while (d < nf && ++counter[static_cast<std::size_t>(d)] == cur_grid) {
          counter[static_cast<std::size_t>(d)] = 0;
          ++d;
        }
        done = d == nf;
      }
      ++result.iterations;
      if (!std::isfinite(level_f)) {
        // Nothing feasible on the first grid: refine it before giving up.
        if (pass == 0 && cur_grid < 1001 && std::pow(2.0 * cur_grid + 1, nf) <= 2e7) {
          cur_grid = 2 * cur_grid + 1;
          continue;
        }
        break;
      }
      cur_grid = grid;
      if (level_f < center_f) {
        center = level_y;
        center_f = level_f;
      } else {
        frac *= 2.0 / (grid - 1);
      }
    }
    if (!std::isfinite(center_f)) {
      if (pass == 0) {
        result.status = OracleStatus::Infeasible;
        result.message = "no feasible grid point";
        return result;
      }
      break;
    }
    if (center_f < best_f) {
      best_f = center_f;
      best_x = basis.offset + basis.map * center;
    }
    // A basic variable resting on its bound means the grid could not see
    // that face; rebuild the split with the most interior variables basic.
    bool tight = false;
    const std::vector<int> free = basis.free;
    for (int v = 0; v < prog.n_vars(); ++v) {
      if (std::binary_search(free.begin(), free.end(), v)) continue;
      if (best_x[v] - lower(v) < 1e-9 * prog.mass()) tight = true;
    }
    if (!tight) break;
    std::stable_sort(preference.begin(), preference.end(),
                     [&](int a, int b) { return best_x[a] - lower(a) > best_x[b] - lower(b); });
  }

  result.status = OracleStatus::Optimal;
  fill_trajectory(prog, best_x, result);
  result.certificate.duality_gap = 0.0;
  return result;
}

}  // namespace fdot
