#include "fdot/admm_solver.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "fdot/log.hpp"
#include "fdot/parallel.hpp"

namespace fdot {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double inf_norm(const Eigen::MatrixXd& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }

}  // namespace

struct AdmmSolver::MomentumSystem {
  using SpMat = Eigen::SparseMatrix<double>;
  using Ldlt = Eigen::SimplicialLDLT<SpMat>;
  using Pcg = Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                                       Eigen::DiagonalPreconditioner<double>>;

  SpMat base;                       // beta D D^T + gamma I
  std::vector<Eigen::Index> diag;   // value index of each diagonal entry
  bool direct = true;
  std::vector<SpMat> mats;
  std::vector<std::unique_ptr<Ldlt>> ldlt;
  std::vector<std::unique_ptr<Pcg>> pcg;

  MomentumSystem(const DirectedGraph& g, int k, const SolverSettings& s) {
    const auto& d = g.incidence();
    SpMat dc = d;  // column-major copy
    base = s.beta * (dc * dc.transpose());
    SpMat eye(g.n_edges(), g.n_edges());
    eye.setIdentity();
    base += s.gamma * eye;
    base.makeCompressed();
    diag.resize(static_cast<std::size_t>(g.n_edges()));
    for (int col = 0; col < base.outerSize(); ++col) {
      for (auto p = base.outerIndexPtr()[col]; p < base.outerIndexPtr()[col + 1]; ++p) {
        if (base.innerIndexPtr()[p] == col) diag[static_cast<std::size_t>(col)] = p;
      }
    }
    direct = g.n_edges() <= s.direct_max_edges;
    mats.assign(static_cast<std::size_t>(k), base);
    for (int i = 0; i < k; ++i) {
      if (direct) {
        ldlt.push_back(std::make_unique<Ldlt>());
        ldlt.back()->analyzePattern(base);
      } else {
        pcg.push_back(std::make_unique<Pcg>());
        pcg.back()->setTolerance(s.pcg_tol);
        pcg.back()->setMaxIterations(std::max<int>(1000, 10 * g.n_edges()));
      }
    }
  }
};

AdmmSolver::AdmmSolver(const DirectedGraph& graph, const Eigen::VectorXd& rho0,
                       const Eigen::VectorXd& rhok, int k, std::optional<FdParams> fd,
                       SolverSettings settings)
    : graph_(&graph), k_(k), fd_(std::move(fd)), settings_(settings) {
  settings_.validate();
  TimeGrid grid(k);
  (void)grid;
  if (rho0.size() != graph.n_vertices() || rhok.size() != graph.n_vertices()) {
    throw SolverError("marginals do not match the vertex count");
  }
  const double m0 = rho0.sum(), mk = rhok.sum();
  if (!(m0 > 0.0) || std::abs(m0 - mk) > 1e-6 * std::max(m0, mk)) {
    throw SolverError("infeasible scenario: marginals carry different mass");
  }
  if (fd_) {
    if (fd_->n_edges() != graph.n_edges() || fd_->k() != k) throw SolverError("fd parameter shape mismatch");
    fd_->validate();
  }
  floor_ = settings_.rho_floor > 0.0 ? settings_.rho_floor : 1e-8 * m0 / graph.n_vertices();
  rho0_ = apply_density_floor(rho0, floor_);
  rhok_ = apply_density_floor(rhok, floor_);
  momentum_ = std::make_unique<MomentumSystem>(graph, k, settings_);
  density_ = std::make_unique<DensitySubproblem>(graph, rho0_, rhok_, k, settings_.beta, floor_);
}

AdmmSolver::AdmmSolver(const Scenario& scenario)
    : AdmmSolver(scenario.graph, scenario.rho0, scenario.rhok, scenario.k, scenario.fd_params(),
                 [&] {
                   auto s = scenario.settings;
                   s.rho_floor = scenario.rho_floor();
                   return s;
                 }()) {}

AdmmSolver::~AdmmSolver() = default;

bool AdmmSolver::joint_coupling() const {
  return fd_.has_value() && settings_.coupling == FdCoupling::Joint;
}

std::vector<bool> AdmmSolver::enforced_steps() const {
  std::vector<bool> out(static_cast<std::size_t>(k_), false);
  if (fd_) {
    for (int i = 1; i <= k_; ++i) out[static_cast<std::size_t>(i - 1)] = fd_->enforced(i);
  }
  return out;
}

SolverState AdmmSolver::initial_state() const {
  SolverState st;
  st.rho = linear_interpolation(rho0_, rhok_, k_);
  for (int j = 1; j < k_; ++j) st.rho.snapshot(j) = st.rho.snapshot(j).cwiseMax(floor_);
  const int ne = graph_->n_edges(), nv = graph_->n_vertices();
  st.m = Eigen::MatrixXd::Zero(ne, k_);
  st.q = Eigen::MatrixXd::Zero(ne, k_);
  st.lambda = Eigen::MatrixXd::Zero(nv, k_);
  st.phi = Eigen::MatrixXd::Zero(ne, k_);
  st.s = midpoint_densities(st.rho, *graph_);
  st.psi = Eigen::MatrixXd::Zero(ne, k_);
  return st;
}

SolverState AdmmSolver::random_state(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  SolverState st = initial_state();
  const int nv = graph_->n_vertices();
  auto fill = [&rng](Eigen::MatrixXd& x, double lo, double hi) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, j) = lo + (hi - lo) * unit_uniform(rng);
    }
  };
  for (int j = 1; j < k_; ++j) {
    for (VertexId v = 0; v < nv; ++v) st.rho.snapshots(v, j) = floor_ + 2.0 * unit_uniform(rng) / nv;
  }
  fill(st.m, 0.0, 0.05);
  fill(st.q, 0.0, 0.05);
  fill(st.lambda, -1.0, 1.0);
  fill(st.phi, -1.0, 1.0);
  fill(st.s, 0.0, 2.0 / nv);
  fill(st.psi, -1.0, 1.0);
  return st;
}

void AdmmSolver::check_state(const SolverState& st) const {
  const int ne = graph_->n_edges(), nv = graph_->n_vertices();
  auto shape = [](const Eigen::MatrixXd& x, int r, int c) { return x.rows() == r && x.cols() == c; };
  if (!shape(st.rho.snapshots, nv, k_ + 1) || !shape(st.m, ne, k_) || !shape(st.q, ne, k_) ||
      !shape(st.lambda, nv, k_) || !shape(st.phi, ne, k_) || !shape(st.s, ne, k_) ||
      !shape(st.psi, ne, k_)) {
    throw SolverError("solver state has inconsistent dimensions");
  }
}

Eigen::MatrixXd AdmmSolver::update_momentum(const SolverState& st) {
  const auto& g = *graph_;
  const auto& d = g.incidence();
  auto& sys = *momentum_;
  const double beta = settings_.beta, gamma = settings_.gamma;
  Eigen::MatrixXd out(g.n_edges(), k_);
  std::vector<double> residuals(static_cast<std::size_t>(k_), 0.0);
  std::vector<int> failures(static_cast<std::size_t>(k_), 0);

  parallel_for(k_, settings_.threads, [&](int idx) {
    const int i = idx + 1;
    const auto ui = static_cast<std::size_t>(idx);
    auto& mat = sys.mats[ui];
    std::copy(sys.base.valuePtr(), sys.base.valuePtr() + sys.base.nonZeros(), mat.valuePtr());
    for (EdgeId e = 0; e < g.n_edges(); ++e) {
      const auto& ed = g.edge(e);
      const double a = st.rho.snapshots(ed.tail, i - 1);
      const double b = st.rho.snapshots(ed.head, i);
      if (!(a > 0.0 && b > 0.0)) {
        failures[ui] = 1;
        return;
      }
      mat.valuePtr()[sys.diag[static_cast<std::size_t>(e)]] += k_ * (0.5 / a + 0.5 / b);
    }
    const Eigen::VectorXd delta = st.rho.snapshot(i) - st.rho.snapshot(i - 1);
    const Eigen::VectorXd rhs = beta * (d * delta) - d * st.lambda.col(idx) + gamma * st.q.col(idx) -
                                st.phi.col(idx);
    Eigen::VectorXd sol;
    if (sys.direct) {
      auto& solver = *sys.ldlt[ui];
      solver.factorize(mat);
      if (solver.info() != Eigen::Success) {
        failures[ui] = 2;
        return;
      }
      sol = solver.solve(rhs);
    } else {
      auto& solver = *sys.pcg[ui];
      solver.compute(mat);
      sol = solver.solveWithGuess(rhs, st.m.col(idx));
    }
    if (!sol.allFinite()) {
      failures[ui] = 2;
      return;
    }
    residuals[ui] = (mat * sol - rhs).norm() / (1.0 + rhs.norm());
    out.col(idx) = sol;
  });

  for (int i = 0; i < k_; ++i) {
    if (failures[static_cast<std::size_t>(i)] == 1) {
      throw SolverError("momentum update: density at or below zero at step " + std::to_string(i + 1));
    }
    if (failures[static_cast<std::size_t>(i)] == 2) {
      throw SolverError("momentum update: linear solve broke down at step " + std::to_string(i + 1));
    }
  }
  return out;
}

Eigen::MatrixXd AdmmSolver::update_capacity_copy(const SolverState& st) const {
  const Eigen::MatrixXd target = st.m + st.phi / settings_.gamma;
  if (!fd_) return target.cwiseMax(0.0);
  return project_fd_set(target, st.rho, *graph_, *fd_);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> AdmmSolver::update_capacity_joint(
    const SolverState& st) const {
  const auto& g = *graph_;
  const double gamma = settings_.gamma, eta = settings_.effective_eta();
  const Eigen::MatrixXd rbar = midpoint_densities(st.rho, g);
  Eigen::MatrixXd q(g.n_edges(), k_), s(g.n_edges(), k_);
  parallel_for(k_, settings_.threads, [&](int idx) {
    const int i = idx + 1;
    const bool on = fd_ && fd_->enforced(i);
    for (EdgeId e = 0; e < g.n_edges(); ++e) {
      const double zq = st.m(e, idx) + st.phi(e, idx) / gamma;
      if (on) {
        const double zs = rbar(e, idx) - st.psi(e, idx) / eta;
        const auto p = project_hypograph(fd_->curve(e, i), zs, zq, eta, gamma);
        q(e, idx) = p.flux;
        s(e, idx) = p.rho;
      } else {
        q(e, idx) = std::max(zq, 0.0);
        s(e, idx) = rbar(e, idx);
      }
    }
  });
  return {std::move(q), std::move(s)};
}

DensityTrajectory AdmmSolver::update_density(const SolverState& st, NewtonReport* report) {
  DensityTrajectory rho = st.rho;
  if (k_ < 2) {
    if (report) *report = NewtonReport{0, true, false, 0.0};
    return rho;
  }
  auto& sub = *density_;
  sub.set_momentum(st.m);
  sub.set_continuity_dual(st.lambda);
  if (joint_coupling()) {
    sub.set_midpoint_coupling(enforced_steps(), st.s, st.psi, settings_.effective_eta());
  } else {
    sub.clear_midpoint_coupling();
  }
  Eigen::MatrixXd interior = rho.snapshots.middleCols(1, k_ - 1);
  const auto rep = sub.minimize(interior, settings_.newton_iters, settings_.newton_tol);
  rho.snapshots.middleCols(1, k_ - 1) = interior;
  if (report) *report = rep;
  return rho;
}

void AdmmSolver::update_duals(SolverState& st) const {
  const auto& g = *graph_;
  for (int i = 1; i <= k_; ++i) {
    st.lambda.col(i - 1) += settings_.beta * (g.divergence(st.m.col(i - 1)) -
                                              (st.rho.snapshot(i) - st.rho.snapshot(i - 1)));
  }
  st.phi += settings_.gamma * (st.m - st.q);
  if (joint_coupling()) {
    const Eigen::MatrixXd rbar = midpoint_densities(st.rho, g);
    const double eta = settings_.effective_eta();
    for (int i = 1; i <= k_; ++i) {
      if (!fd_->enforced(i)) continue;
      st.psi.col(i - 1) += eta * (st.s.col(i - 1) - rbar.col(i - 1));
    }
  }
}

double AdmmSolver::objective(const SolverState& st) const {
  const auto& g = *graph_;
  double total = 0.0;
  for (int i = 1; i <= k_; ++i) {
    for (EdgeId e = 0; e < g.n_edges(); ++e) {
      const double flux = st.m(e, i - 1);
      const auto& ed = g.edge(e);
      total += 0.5 * k_ * (0.5 / st.rho.snapshots(ed.tail, i - 1) + 0.5 / st.rho.snapshots(ed.head, i)) *
               flux * flux;
    }
  }
  return total;
}

IterationRecord AdmmSolver::iterate(SolverState& st) {
  const auto& g = *graph_;
  st.m = update_momentum(st);
  if (joint_coupling()) {
    auto [q, s] = update_capacity_joint(st);
    st.q = std::move(q);
    st.s = std::move(s);
  } else {
    st.q = update_capacity_copy(st);
  }
  NewtonReport rep;
  st.rho = update_density(st, &rep);
  if (rep.line_search_failed) ++st.line_search_failures;
  update_duals(st);
  ++st.iteration;

  IterationRecord rec;
  rec.iteration = st.iteration;
  rec.objective = objective(st);
  double cont = 0.0;
  for (int i = 1; i <= k_; ++i) {
    const Eigen::VectorXd r =
        g.divergence(st.m.col(i - 1)) - (st.rho.snapshot(i) - st.rho.snapshot(i - 1));
    cont = std::max(cont, inf_norm(r));
  }
  rec.continuity_residual = cont;
  rec.consensus_residual = inf_norm(st.m - st.q);
  if (joint_coupling()) {
    const Eigen::MatrixXd rbar = midpoint_densities(st.rho, g);
    double mid = 0.0;
    for (int i = 1; i <= k_; ++i) {
      if (fd_->enforced(i)) mid = std::max(mid, inf_norm(st.s.col(i - 1) - rbar.col(i - 1)));
    }
    rec.midpoint_residual = mid;
  }
  rec.newton_steps = rep.iterations;
  return rec;
}

Trajectory AdmmSolver::solve() { return solve(initial_state()); }

Trajectory AdmmSolver::solve(SolverState st,
                             const std::function<void(const IterationRecord&)>& on_iteration) {
  check_state(st);
  st.rho.snapshot(0) = rho0_;
  st.rho.snapshot(k_) = rhok_;
  for (int j = 1; j < k_; ++j) st.rho.snapshot(j) = st.rho.snapshot(j).cwiseMax(floor_);

  const double tol = settings_.tol_primal;
  double prev_objective = std::numeric_limits<double>::quiet_NaN();
  std::optional<SolverState> best;
  double best_residual = std::numeric_limits<double>::infinity();
  bool converged = false;

  for (int it = 0; it < settings_.max_iters; ++it) {
    const IterationRecord rec = iterate(st);
    if (settings_.record_history) st.history.push_back(rec);
    if (on_iteration) on_iteration(rec);

    const double worst =
        std::max({rec.continuity_residual, rec.consensus_residual, rec.midpoint_residual});
    const double rel_change = std::abs(rec.objective - prev_objective) /
                              std::max(std::abs(rec.objective), std::numeric_limits<double>::min());
    prev_objective = rec.objective;
    if (!std::isfinite(rec.objective) || !std::isfinite(worst)) {
      throw SolverError("iteration " + std::to_string(rec.iteration) + " produced non-finite values");
    }
    if (log::enabled(log::Level::Debug) && (rec.iteration % 500 == 0)) {
      std::ostringstream os;
      os << "iter " << rec.iteration << " J=" << rec.objective << " cont=" << rec.continuity_residual
         << " cons=" << rec.consensus_residual << " mid=" << rec.midpoint_residual;
      log::debug(os.str());
    }
    if (worst < tol && rel_change < settings_.tol_obj) {
      converged = true;
      break;
    }
    if (worst < best_residual) {
      best_residual = worst;
      best = st;
    }
  }
  if (converged || !best) return finish(st, converged);
  best->history = std::move(st.history);
  best->iteration = st.iteration;
  return finish(*best, false);
}

Trajectory AdmmSolver::finish(const SolverState& st, bool converged) const {
  Trajectory t;
  t.rho = st.rho;
  t.momentum.steps = fd_ ? project_fd_set(st.q, st.rho, *graph_, *fd_) : st.q.cwiseMax(0.0);
  t.objective = action(t.rho, t.momentum, *graph_);
  t.iterations = st.iteration;
  t.converged = converged;
  if (!st.history.empty()) {
    const auto& last = st.history.back();
    t.continuity_residual = last.continuity_residual;
    t.consensus_residual = last.consensus_residual;
    t.midpoint_residual = last.midpoint_residual;
  }
  t.history = st.history;
  t.settings = settings_;
  t.settings.rho_floor = floor_;
  t.fd_active = fd_.has_value();
  t.line_search_failures = st.line_search_failures;
  return t;
}

Trajectory solve(const Scenario& scenario) {
  if (!scenario.graph_options.allow_disconnected && !scenario.graph.is_connected()) {
    throw SolverError("infeasible scenario: graph is not connected");
  }
  const auto label = scenario.graph.component_labels();
  const int nc = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  std::vector<double> balance(static_cast<std::size_t>(nc), 0.0);
  for (VertexId v = 0; v < scenario.n_vertices; ++v) {
    balance[static_cast<std::size_t>(label[static_cast<std::size_t>(v)])] += scenario.rho0[v] - scenario.rhok[v];
  }
  for (int c = 0; c < nc; ++c) {
    if (std::abs(balance[static_cast<std::size_t>(c)]) > 1e-9 * std::max(1.0, scenario.rho0.sum())) {
      throw SolverError("infeasible scenario: component " + std::to_string(c) +
                        " holds different initial and final mass");
    }
  }
  AdmmSolver solver(scenario);
  return solver.solve();
}

}  // namespace fdot
