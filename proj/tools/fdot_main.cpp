#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fdot/admm_solver.hpp"
#include "fdot/log.hpp"
#include "fdot/reference_oracle.hpp"
#include "fdot/render.hpp"
#include "fdot/scenario_io.hpp"

namespace fs = std::filesystem;
using namespace fdot;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kNotConverged = 2;
constexpr int kOracleDisagrees = 3;

constexpr int kCheckMaxVertices = 50;
constexpr int kCheckMaxSteps = 10;
constexpr double kCheckGap = 1e-5;

struct Overrides {
  std::optional<double> beta, gamma, tol, tol_obj;
  std::optional<int> max_iters, threads;
  std::optional<std::uint64_t> seed;
  bool no_fd = false;
  std::optional<std::string> fd_steps;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--beta", o.beta, "continuity penalty");
  cmd->add_option("--gamma", o.gamma, "consensus penalty");
  cmd->add_option("--tol", o.tol, "primal residual tolerance");
  cmd->add_option("--tol-obj", o.tol_obj, "relative objective change tolerance");
  cmd->add_option("--max-iters", o.max_iters, "iteration cap");
  cmd->add_flag("--no-fd", o.no_fd, "drop the capacity cap (momenta stay nonnegative)");
  cmd->add_option("--fd-steps", o.fd_steps, "steps on which the cap is enforced")
      ->check(CLI::IsMember({"all", "interior"}));
  cmd->add_option("--seed", o.seed, "start from a seeded random state instead of the interpolation");
  cmd->add_option("--threads", o.threads, "worker threads inside the solver");
}

void apply(const Overrides& o, Scenario& s) {
  if (o.beta) s.settings.beta = *o.beta;
  if (o.gamma) s.settings.gamma = *o.gamma;
  if (o.tol) s.settings.tol_primal = *o.tol;
  if (o.tol_obj) s.settings.tol_obj = *o.tol_obj;
  if (o.max_iters) s.settings.max_iters = *o.max_iters;
  if (o.threads) s.settings.threads = *o.threads;
  if (o.no_fd) s.fd.reset();
  if (o.fd_steps && s.fd) {
    s.fd->enforcement = *o.fd_steps == "all" ? Enforcement::AllSteps : Enforcement::InteriorSteps;
  }
  s.settings.validate();
}

Trajectory run_admm(const Scenario& s, const Overrides& o) {
  if (!s.graph_options.allow_disconnected && !s.graph.is_connected()) {
    throw SolverError("infeasible scenario: graph is not connected");
  }
  AdmmSolver solver(s);
  SolverState start = o.seed ? solver.random_state(*o.seed) : solver.initial_state();
  return solver.solve(std::move(start));
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

int cmd_solve(const std::string& scenario_path, const std::string& out_dir, const Overrides& o) {
  Scenario s = load_scenario(scenario_path);
  apply(o, s);
  const auto t0 = std::chrono::steady_clock::now();
  const Trajectory t = run_admm(s, o);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_trajectory(t, s, out_dir);
  std::cout << "objective " << fmt(t.objective) << "\n"
            << "iterations " << t.iterations << "\n"
            << "converged " << (t.converged ? "yes" : "no") << "\n"
            << "continuity_residual " << fmt(t.continuity_residual) << "\n"
            << "consensus_residual " << fmt(t.consensus_residual) << "\n";
  log::info("solve took " + fmt(sec) + " s");
  if (!t.converged) {
    log::warn("iteration cap reached before convergence");
    return kNotConverged;
  }
  return kOk;
}

int cmd_check(const std::string& scenario_path, const Overrides& o) {
  Scenario s = load_scenario(scenario_path);
  apply(o, s);
  if (s.n_vertices > kCheckMaxVertices || s.k > kCheckMaxSteps) {
    std::cerr << "check: scenario too large for the reference solver (n = " << s.n_vertices << ", k = " << s.k
              << "; limits n <= " << kCheckMaxVertices << ", k <= " << kCheckMaxSteps
              << "). Use `solve` and inspect the residuals instead, or coarsen the scenario.\n";
    return kFailure;
  }
  const Trajectory t = run_admm(s, o);
  BarrierOptions bo;
  bo.rho_floor = s.settings.rho_floor;
  const OracleResult ref = solve_barrier(s.graph, s.rho0, s.rhok, s.k, s.fd_params(), bo);

  std::cout << "admm_objective " << fmt(t.objective) << "\n"
            << "admm_converged " << (t.converged ? "yes" : "no") << "\n"
            << "admm_iterations " << t.iterations << "\n"
            << "continuity_residual " << fmt(t.continuity_residual) << "\n"
            << "consensus_residual " << fmt(t.consensus_residual) << "\n"
            << "oracle_status " << to_string(ref.status) << "\n";
  if (ref.status == OracleStatus::Infeasible) {
    if (t.converged) {
      std::cerr << "check: reference solver reports an infeasible program but ADMM converged\n";
      return kOracleDisagrees;
    }
    return kFailure;
  }
  if (ref.status == OracleStatus::Refused) {
    std::cerr << "check: " << ref.message << "\n";
    return kFailure;
  }
  const double gap = std::abs(t.objective - ref.objective) / std::max(1.0, std::abs(ref.objective));
  std::cout << "oracle_objective " << fmt(ref.objective) << "\n"
            << "oracle_duality_gap " << fmt(ref.certificate.duality_gap) << "\n"
            << "relative_gap " << fmt(gap) << "\n";
  return gap < kCheckGap ? kOk : kFailure;
}

std::vector<int> parse_snapshots(const std::string& list) {
  std::vector<int> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

int cmd_render(const std::string& dir, const std::string& out_dir, const std::string& snapshots,
               const std::string& layout, RenderSpec spec) {
  const SavedTrajectory t = load_trajectory(dir);
  spec.snapshots = parse_snapshots(snapshots);
  const fs::path out = out_dir.empty() ? fs::path(dir) : fs::path(out_dir);
  fs::create_directories(out);
  if (layout != "filmstrip") {
    const RenderScales scales = render_scales(t);
    std::vector<int> frames = spec.snapshots;
    if (frames.empty()) {
      for (int i = 0; i <= t.k; ++i) frames.push_back(i);
    }
    for (int i : frames) {
      char name[32];
      std::snprintf(name, sizeof(name), "snapshot_%03d.svg", i);
      write_text(out / name, render_snapshot_svg(t, i, scales, spec));
    }
  }
  if (layout != "snapshots") write_text(out / "filmstrip.svg", render_filmstrip_svg(t, spec));
  return kOk;
}

int cmd_convergence(const std::string& dir, std::optional<double> reference, const std::string& out_file) {
  const auto history = load_history(dir);
  const fs::path out = out_file.empty() ? fs::path(dir) / "convergence.svg" : fs::path(out_file);
  write_text(out, render_convergence_svg(history, reference));
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

void emit(const Scenario& s, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << scenario_to_json(s);
  } else {
    save_scenario(s, out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal transport on graphs under fundamental-diagram capacity caps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fdot 0.1.0");

  Overrides solve_o;
  std::string solve_scenario, solve_out;
  auto* solve = app.add_subcommand("solve", "solve a scenario and write the trajectory");
  solve->add_option("scenario", solve_scenario, "scenario JSON")->required();
  solve->add_option("output", solve_out, "output directory")->required();
  add_overrides(solve, solve_o);

  Overrides check_o;
  std::string check_scenario;
  auto* check = app.add_subcommand("check", "compare ADMM with the interior-point reference");
  check->add_option("scenario", check_scenario, "scenario JSON")->required();
  add_overrides(check, check_o);

  std::string render_dir, render_out, render_snaps, render_layout = "both";
  RenderSpec spec;
  auto* render = app.add_subcommand("render", "draw density snapshots as SVG");
  render->add_option("trajectory", render_dir, "directory written by solve")->required();
  render->add_option("-o,--out", render_out, "output directory (default: the trajectory directory)");
  render->add_option("--snapshots", render_snaps, "comma-separated snapshot indices (default: all)");
  render->add_option("--layout", render_layout, "snapshots | filmstrip | both")
      ->check(CLI::IsMember({"snapshots", "filmstrip", "both"}));
  render->add_option("--width", spec.width, "panel width");
  render->add_option("--height", spec.height, "panel height");
  render->add_option("--columns", spec.filmstrip_columns, "filmstrip columns");

  std::string conv_dir, conv_out;
  std::optional<double> conv_ref;
  auto* conv = app.add_subcommand("convergence", "plot objective against iteration");
  conv->add_option("trajectory", conv_dir, "directory written by solve")->required();
  conv->add_option("--reference", conv_ref, "reference objective drawn as a dashed line");
  conv->add_option("-o,--out", conv_out, "output SVG (default: <trajectory>/convergence.svg)");

  auto* gen = app.add_subcommand("generate", "write a generated scenario");
  gen->require_subcommand(1);
  std::string gen_out;

  LineOptions lo;
  std::optional<double> line_v0, line_rh;
  auto* line = gen->add_subcommand("line", "path graph with upstream and downstream bumps");
  line->add_option("--n", lo.n, "vertices");
  line->add_option("--k", lo.k, "time intervals");
  line->add_option("--source", lo.source, "initial bump centre as a fraction of the length");
  line->add_option("--target", lo.target, "final bump centre as a fraction of the length");
  line->add_option("--width", lo.width, "bump standard deviation as a fraction of the length");
  line->add_option("--background", lo.background, "uniform share of the mass");
  line->add_option("--v0", line_v0, "free-flow speed (enables the cap with --rho-hat)");
  line->add_option("--rho-hat", line_rh, "jam density");
  line->add_option("-o,--out", gen_out, "output file (default: stdout)");

  PlanarOptions po;
  std::optional<double> pl_v0, pl_rh;
  auto* planar = gen->add_subcommand("planar", "seeded random planar road graph");
  planar->add_option("--n", po.n, "vertices");
  planar->add_option("--k", po.k, "time intervals");
  planar->add_option("--seed", po.seed, "generator seed");
  planar->add_option("--edges-per-vertex", po.directed_per_vertex, "directed edges per vertex");
  planar->add_option("--source", po.source, "initial bump centre x y")->expected(2);
  planar->add_option("--target", po.target, "final bump centre x y")->expected(2);
  planar->add_option("--width", po.width, "bump standard deviation");
  planar->add_option("--background", po.background, "uniform share of the mass");
  planar->add_option("--v0", pl_v0, "free-flow speed (enables the cap with --rho-hat)");
  planar->add_option("--rho-hat", pl_rh, "jam density");
  planar->add_option("-o,--out", gen_out, "output file (default: stdout)");

  std::string csv_nodes, csv_edges;
  int csv_k = 7;
  auto* csv = gen->add_subcommand("csv", "scenario from node and edge CSV files");
  csv->add_option("--nodes", csv_nodes, "nodes CSV (id,x,y[,rho0,rhok])")->required();
  csv->add_option("--edges", csv_edges, "edges CSV (a,b)")->required();
  csv->add_option("--k", csv_k, "time intervals");
  csv->add_option("-o,--out", gen_out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFailure;
  }

  try {
    if (*solve) return cmd_solve(solve_scenario, solve_out, solve_o);
    if (*check) return cmd_check(check_scenario, check_o);
    if (*render) return cmd_render(render_dir, render_out, render_snaps, render_layout, spec);
    if (*conv) return cmd_convergence(conv_dir, conv_ref, conv_out);
    if (*line) {
      lo.v0 = line_v0;
      lo.rho_hat = line_rh;
      emit(generate_line(lo), gen_out);
    } else if (*planar) {
      po.v0 = pl_v0;
      po.rho_hat = pl_rh;
      emit(generate_planar(po), gen_out);
    } else if (*csv) {
      emit(import_graph_csv(csv_nodes, csv_edges, csv_k), gen_out);
    }
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
