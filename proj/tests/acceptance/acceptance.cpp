// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Tolerances are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "fdot/admm_solver.hpp"
#include "fdot/density_update.hpp"
#include "fdot/fundamental_diagram.hpp"
#include "fdot/reference_oracle.hpp"
#include "fdot/scenario_io.hpp"

using namespace fdot;

namespace {

constexpr double kMicroRel = 1e-8;
constexpr double kMicroSeconds = 1.0;
constexpr double kLineRel = 1e-6;
constexpr double kLineTol = 1e-8;
constexpr double kLineSeconds = 30.0;
constexpr double kUniqueInf = 1e-5;
constexpr double kGradientRel = 1e-6;
constexpr double kPeakSlack = 1e-6;
constexpr double kPlanarTol = 1e-6;
constexpr double kPlanarSeconds = 300.0;
constexpr double kPlanarBeta = 60000.0;
constexpr double kPlanarGamma = 50000.0;
constexpr double kThreadRel = 1e-12;
constexpr int kSamples = 1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s  (%s)\n", id, pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

// Every converged run of the suite, for the mass check.
std::vector<Trajectory> converged_runs;

Trajectory run(const Scenario& s, std::optional<SolverState> start = std::nullopt) {
  AdmmSolver solver(s);
  Trajectory t = start ? solver.solve(std::move(*start)) : solver.solve();
  if (t.converged) converged_runs.push_back(t);
  return t;
}

Scenario line(int k, std::optional<double> v0, std::optional<double> rho_hat) {
  LineOptions o;
  o.n = 30;
  o.k = k;
  o.v0 = v0;
  o.rho_hat = rho_hat;
  Scenario s = generate_line(o);
  s.settings.threads = 1;
  s.settings.tol_primal = kLineTol;
  return s;
}

double barrier_objective(const Scenario& s, OracleStatus* status = nullptr) {
  BarrierOptions opts;
  opts.rho_floor = s.rho_floor();
  const auto r = solve_barrier(s.graph, s.rho0, s.rhok, s.k, s.fd_params(), opts);
  if (status) *status = r.status;
  return r.objective;
}

// True when every momentum lies in [0, Q(midpoint)] on enforced steps and is
// nonnegative elsewhere, with no tolerance.
bool inside_fd_set(const Trajectory& t, const DirectedGraph& g, const FdParams& fd) {
  for (int i = 1; i <= t.momentum.k(); ++i) {
    for (EdgeId e = 0; e < g.n_edges(); ++e) {
      const double q = t.momentum.steps(e, i - 1);
      if (q < 0.0) return false;
      if (fd.enforced(i) && q > capacity(fd, e, i, midpoint_density(t.rho, g.edge(e), i))) return false;
    }
  }
  return true;
}

double max_abs_diff(const Trajectory& a, const Trajectory& b) {
  return std::max((a.rho.snapshots - b.rho.snapshots).cwiseAbs().maxCoeff(),
                  (a.momentum.steps - b.momentum.steps).cwiseAbs().maxCoeff());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void criterion_micro() {
  const auto t0 = Clock::now();
  LineOptions o;
  o.n = 2;
  o.k = 1;
  Scenario s = generate_line(o);
  const double eps = s.rho_floor();
  s.rho0 = Eigen::Vector2d(1.0 - eps, eps);
  s.rhok = Eigen::Vector2d(eps, 1.0 - eps);
  finalize(s);
  const Trajectory t = run(s);
  const auto b = solve_barrier(s.graph, s.rho0, s.rhok, 1, std::nullopt);
  const auto x = solve_exhaustive(s.graph, s.rho0, s.rhok, 1, std::nullopt);
  const double moved = s.rho0[0] - s.rhok[0];
  const double forward = t.momentum.steps(0, 0) - t.momentum.steps(1, 0);
  const double sec = seconds_since(t0);
  const double gap = std::max({rel(t.objective, b.objective), rel(t.objective, x.objective),
                               rel(b.objective, x.objective)});
  const double flow = std::abs(forward - moved);
  const bool pass = t.converged && b.status == OracleStatus::Optimal &&
                    x.status == OracleStatus::Optimal && gap < kMicroRel && flow < kMicroRel &&
                    sec < kMicroSeconds;
  report(1, "analytic micro instance", pass,
         "objective spread " + fmt(gap) + ", flow error " + fmt(flow) + ", " + fmt(sec) + " s");
}

struct LinePair {
  Trajectory free, capped;
  Scenario free_s, capped_s;
};

void criterion_line_free(LinePair& lp) {
  lp.free_s = line(5, std::nullopt, std::nullopt);
  const auto t0 = Clock::now();
  lp.free = run(lp.free_s);
  const double sec = seconds_since(t0);
  OracleStatus st;
  const double ref = barrier_objective(lp.free_s, &st);
  const double gap = rel(lp.free.objective, ref);
  const bool pass = lp.free.converged && st == OracleStatus::Optimal && gap < kLineRel &&
                    lp.free.continuity_residual < kLineTol && lp.free.consensus_residual < kLineTol &&
                    sec < kLineSeconds;
  report(2, "FD-inactive line matches the barrier oracle", pass,
         "relative gap " + fmt(gap) + ", residuals " + fmt(lp.free.continuity_residual) + " / " +
             fmt(lp.free.consensus_residual) + ", " + std::to_string(lp.free.iterations) + " iterations, " +
             fmt(sec) + " s");
}

void criterion_line_capped(LinePair& lp) {
  lp.capped_s = line(5, 1.0, 0.10);
  const auto t0 = Clock::now();
  lp.capped = run(lp.capped_s);
  const double sec = seconds_since(t0);
  OracleStatus st;
  const double ref = barrier_objective(lp.capped_s, &st);
  const double gap = rel(lp.capped.objective, ref);
  const bool feasible = inside_fd_set(lp.capped, lp.capped_s.graph, *lp.capped_s.fd_params());
  const bool ordered = lp.capped.objective >= lp.free.objective;
  const bool pass = lp.capped.converged && st == OracleStatus::Optimal && gap < kLineRel && feasible && ordered;
  report(3, "FD-active line matches the barrier oracle", pass,
         "relative gap " + fmt(gap) + ", inside FD set " + (feasible ? "yes" : "no") + ", J_fd " +
             fmt(lp.capped.objective) + " vs J_free " + fmt(lp.free.objective) + ", " + fmt(sec) + " s");
}

void criterion_uniqueness(const LinePair& lp) {
  std::vector<Trajectory> runs;
  bool all_converged = true;
  AdmmSolver solver(lp.capped_s);
  for (std::uint64_t seed = 11; seed < 16; ++seed) {
    runs.push_back(run(lp.capped_s, solver.random_state(seed)));
    all_converged = all_converged && runs.back().converged;
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < runs.size(); ++a) {
    for (std::size_t b = a + 1; b < runs.size(); ++b) worst = std::max(worst, max_abs_diff(runs[a], runs[b]));
  }
  report(5, "random initializations reach one minimizer", all_converged && worst <= kUniqueInf,
         "max pairwise difference " + fmt(worst));
}

void criterion_gradient() {
  const Scenario s = line(7, std::nullopt, std::nullopt);
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = s.n_vertices, k = s.k, ne = s.graph.n_edges();
  double worst = 0.0;
  for (int sample = 0; sample < 20; ++sample) {
    DensitySubproblem p(s.graph, s.rho0, s.rhok, k, 60.0, s.rho_floor());
    Eigen::MatrixXd m(ne, k), lambda(n, k), mid(ne, k), psi(ne, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.05 * u(rng);
    for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda.data()[i] = 2.0 * u(rng) - 1.0;
    for (Eigen::Index i = 0; i < mid.size(); ++i) mid.data()[i] = 0.1 * u(rng);
    for (Eigen::Index i = 0; i < psi.size(); ++i) psi.data()[i] = 2.0 * u(rng) - 1.0;
    p.set_momentum(m);
    p.set_continuity_dual(lambda);
    if (sample % 2 == 1) {
      std::vector<bool> on(static_cast<std::size_t>(k), true);
      on.front() = on.back() = false;
      p.set_midpoint_coupling(on, mid, psi, 50.0);
    }
    Eigen::MatrixXd x(n, k - 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 0.005 + 0.1 * u(rng);
    const Eigen::MatrixXd g = p.gradient(x);
    Eigen::MatrixXd fd(n, k - 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double h = 1e-5 * x.data()[i];
      Eigen::MatrixXd xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      fd.data()[i] = p.change(xm, xp) / (2.0 * h);
    }
    worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff());
  }
  report(6, "density-subproblem gradient vs central differences", worst < kGradientRel,
         "worst relative error " + fmt(worst) + " over 20 iterates");
}

void criterion_line_shape() {
  const Scenario s = line(7, 3.0, 0.15);
  const Trajectory t = run(s);
  Eigen::VectorXd pos(s.n_vertices);
  for (int v = 0; v < s.n_vertices; ++v) pos[v] = v;
  bool monotone = true;
  double prev = -1.0, peak = 0.0;
  for (int i = 0; i <= s.k; ++i) {
    const double c = pos.dot(t.rho.snapshot(i)) / t.rho.snapshot(i).sum();
    monotone = monotone && c > prev;
    prev = c;
    peak = std::max(peak, t.rho.snapshot(i).maxCoeff());
  }
  const double bound = std::max(0.15, s.rho0.maxCoeff()) + kPeakSlack;
  report(7, "line density moves downstream under the cap", t.converged && monotone && peak <= bound,
         std::string("centre of mass monotone ") + (monotone ? "yes" : "no") + ", peak " + fmt(peak) +
             " vs bound " + fmt(bound));
}

void criterion_planar() {
  PlanarOptions o;
  o.v0 = 2.0;
  o.rho_hat = 0.05;
  Scenario capped = generate_planar(o);
  capped.settings.beta = kPlanarBeta;
  capped.settings.gamma = kPlanarGamma;
  capped.settings.tol_primal = kPlanarTol;
  capped.settings.tol_obj = kPlanarTol;
  capped.settings.threads = 1;
  Scenario free = capped;
  free.fd.reset();

  auto timed = [](const Scenario& s, double& sec) {
    const auto t0 = Clock::now();
    Trajectory t = run(s);
    sec = seconds_since(t0);
    return t;
  };
  double sec_fd = 0.0, sec_free = 0.0;
  const Trajectory tf = timed(capped, sec_fd);
  const Trajectory tn = timed(free, sec_free);
  auto ok = [](const Trajectory& t, double sec) {
    return t.converged && t.continuity_residual < kPlanarTol && t.consensus_residual < kPlanarTol &&
           sec < kPlanarSeconds;
  };

  const FdParams fd = *capped.fd_params();
  int saturated = 0, smaller = 0;
  for (EdgeId e = 0; e < capped.graph.n_edges(); ++e) {
    bool sat = false;
    for (int i = 1; i <= capped.k && !sat; ++i) {
      if (!fd.enforced(i)) continue;
      const double cap = capacity(fd, e, i, midpoint_density(tf.rho, capped.graph.edge(e), i));
      sat = cap > 0.0 && tf.momentum.steps(e, i - 1) >= cap * (1.0 - 1e-9);
    }
    if (!sat) continue;
    ++saturated;
    if (tf.momentum.steps.row(e).maxCoeff() < tn.momentum.steps.row(e).maxCoeff()) ++smaller;
  }
  const bool pass = ok(tf, sec_fd) && ok(tn, sec_free) && smaller > 0;
  report(8, "planar scale run with and without the FD", pass,
         std::to_string(capped.n_vertices) + " vertices, " + std::to_string(capped.graph.n_edges()) +
             " edges; FD " + std::to_string(tf.iterations) + " it " + fmt(sec_fd) + " s, no FD " +
             std::to_string(tn.iterations) + " it " + fmt(sec_free) + " s; " + std::to_string(smaller) +
             " of " + std::to_string(saturated) + " saturated edges carry a smaller peak");
}

void criterion_determinism() {
  PlanarOptions o;
  o.v0 = 2.0;
  o.rho_hat = 0.05;
  Scenario s = generate_planar(o);
  s.settings.beta = kPlanarBeta;
  s.settings.gamma = kPlanarGamma;
  s.settings.max_iters = 300;
  const auto base = std::filesystem::temp_directory_path() / ("fdot_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(base);

  auto solve_with = [&](int threads, std::uint64_t seed, const std::string& tag) {
    Scenario c = s;
    c.settings.threads = threads;
    AdmmSolver solver(c);
    const Trajectory t = solver.solve(solver.random_state(seed));
    save_trajectory(t, c, base / tag);
    return t;
  };
  bool identical = true;
  for (int threads : {1, 4}) {
    solve_with(threads, 7, "a" + std::to_string(threads));
    solve_with(threads, 7, "b" + std::to_string(threads));
    for (const char* f : {"density.csv", "momentum.csv"}) {
      identical = identical && slurp(base / ("a" + std::to_string(threads)) / f) ==
                                   slurp(base / ("b" + std::to_string(threads)) / f);
    }
  }
  const double j1 = solve_with(1, 7, "t1").objective;
  double spread = 0.0;
  for (int threads : {2, 3, 4}) spread = std::max(spread, rel(solve_with(threads, 7, "t" + std::to_string(threads)).objective, j1));
  std::filesystem::remove_all(base);
  report(9, "repeatable output across runs and thread counts", identical && spread <= kThreadRel,
         std::string("CSVs identical ") + (identical ? "yes" : "no") + ", objective spread " + fmt(spread));
}

void criterion_operators() {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlanarOptions o;
  o.n = 60;
  const Scenario s = generate_planar(o);
  const DirectedGraph& g = s.graph;
  int bad_adjoint = 0, bad_box = 0, bad_hyp = 0, bad_concave = 0;
  for (int sample = 0; sample < kSamples; ++sample) {
    Eigen::VectorXd x(g.n_vertices()), m(g.n_edges());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = 2.0 * u(rng) - 1.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = 2.0 * u(rng) - 1.0;
    const double lhs = g.gradient(x).dot(m), rhs = x.dot(g.divergence(m));
    if (std::abs(lhs - rhs) > 1e-12 * std::max(1.0, std::abs(lhs))) ++bad_adjoint;

    const double upper = u(rng);
    const double a = 4.0 * u(rng) - 2.0, b = 4.0 * u(rng) - 2.0;
    const double pa = project_box(a, upper), pb = project_box(b, upper);
    if (project_box(pa, upper) != pa || std::abs(pa - pb) > std::abs(a - b)) ++bad_box;

    const Greenshields curve{0.5 + 2.0 * u(rng), 0.1 + u(rng)};
    const double wr = 0.1 + u(rng), wf = 0.1 + u(rng);
    const double r1 = 1.5 * curve.rho_hat * (2.0 * u(rng) - 0.5), f1 = curve.max_flux() * (4.0 * u(rng) - 2.0);
    const double r2 = 1.5 * curve.rho_hat * (2.0 * u(rng) - 0.5), f2 = curve.max_flux() * (4.0 * u(rng) - 2.0);
    const auto p1 = project_hypograph(curve, r1, f1, wr, wf);
    const auto p2 = project_hypograph(curve, r2, f2, wr, wf);
    const auto pp = project_hypograph(curve, p1.rho, p1.flux, wr, wf);
    const double scale = std::max(1.0, curve.rho_hat);
    const bool idem = std::abs(pp.rho - p1.rho) <= 1e-12 * scale && std::abs(pp.flux - p1.flux) <= 1e-12 * scale;
    const double d_out = wr * std::pow(p1.rho - p2.rho, 2) + wf * std::pow(p1.flux - p2.flux, 2);
    const double d_in = wr * std::pow(r1 - r2, 2) + wf * std::pow(f1 - f2, 2);
    if (!idem || d_out > d_in * (1.0 + 1e-10) + 1e-24) ++bad_hyp;

    const double ra = curve.rho_hat * u(rng), rb = curve.rho_hat * u(rng), th = u(rng);
    const double mix = curve.flux(th * ra + (1.0 - th) * rb);
    if (mix < th * curve.flux(ra) + (1.0 - th) * curve.flux(rb) - 1e-15) ++bad_concave;
  }
  report(10, "operator properties", bad_adjoint + bad_box + bad_hyp + bad_concave == 0,
         std::to_string(kSamples) + " samples each; failures adjoint " + std::to_string(bad_adjoint) + ", box " +
             std::to_string(bad_box) + ", hypograph " + std::to_string(bad_hyp) + ", concavity " +
             std::to_string(bad_concave));
}

void criterion_mass() {
  double worst = 0.0;
  bool ok = !converged_runs.empty();
  for (const auto& t : converged_runs) {
    const double tol = t.rho.n_vertices() * t.settings.tol_primal;
    for (int i = 0; i <= t.rho.k(); ++i) {
      const double err = std::abs(t.rho.snapshot(i).sum() - 1.0);
      worst = std::max(worst, err / tol);
      ok = ok && err <= tol;
    }
  }
  report(4, "mass conservation on converged runs", ok,
         std::to_string(converged_runs.size()) + " runs, worst error / (n tol) " + fmt(worst));
}

}  // namespace

int main(int argc, char** argv) {
  // Optional argument: comma-free list of criterion ids to run, e.g. "1236".
  const std::string only = argc > 1 ? argv[1] : "";
  auto want = [&](int id) {
    if (only.empty()) return true;
    return only.find(id == 10 ? 'a' : static_cast<char>('0' + id)) != std::string::npos;
  };
  LinePair lp;
  if (want(1)) criterion_micro();
  if (want(2) || want(3) || want(5)) criterion_line_free(lp);
  if (want(3) || want(5)) criterion_line_capped(lp);
  if (want(5)) criterion_uniqueness(lp);
  if (want(6)) criterion_gradient();
  if (want(7)) criterion_line_shape();
  if (want(8)) criterion_planar();
  if (want(9)) criterion_determinism();
  if (want(10)) criterion_operators();
  if (want(4)) criterion_mass();
  std::printf("%d criterion failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
