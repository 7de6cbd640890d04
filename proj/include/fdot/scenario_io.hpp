#pragma once

// Scenario files (JSON), trajectory output (CSV + JSON summary) and scenario
// generators. The file format is documented in docs/scenario.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdot/admm_solver.hpp"
#include "fdot/scenario.hpp"

namespace fdot {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, int line, int column, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_, column_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses and finalizes. Throws ParseError, ValidationError or IoError.
Scenario parse_scenario(const std::string& text, const std::string& source = "<string>");
Scenario load_scenario(const std::filesystem::path& path);

std::string scenario_to_json(const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

// 17 significant digits; reads back to the same double.
std::string format_double(double x);

std::uint64_t settings_hash(const SolverSettings& settings);

// Writes density.csv, momentum.csv, summary.json and, when the trajectory has
// a history, convergence.csv into `dir` (created if missing).
void save_trajectory(const Trajectory& trajectory, const Scenario& scenario,
                     const std::filesystem::path& dir);

struct SavedTrajectory {
  int n_vertices = 0;
  int k = 0;
  std::vector<Edge> edges;
  DensityTrajectory rho;
  MomentumTrajectory momentum;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  std::optional<std::vector<Point2>> coordinates;
};

SavedTrajectory load_trajectory(const std::filesystem::path& dir);
std::vector<IterationRecord> load_history(const std::filesystem::path& dir);

// Path graph 0 - 1 - ... - (n-1). The marginals are Gaussian bumps of
// standard deviation width * (n - 1) centred at source * (n - 1) and
// target * (n - 1), mixed with a uniform share `background` of the mass.
// For n = 2 the bumps are unit masses at the two ends.
struct LineOptions {
  int n = 30;
  int k = 5;
  double source = 0.2;
  double target = 0.8;
  double width = 0.14;
  double background = 0.03;
  std::optional<double> v0;
  std::optional<double> rho_hat;
};

Scenario generate_line(const LineOptions& options);

// Seeded points in the unit square, Delaunay triangulation, Euclidean
// minimum spanning tree plus random further Delaunay edges until the
// directed edge count reaches round(n * directed_per_vertex / 2) * 2.
struct PlanarOptions {
  int n = 291;
  int k = 7;
  std::uint64_t seed = 1;
  double directed_per_vertex = 614.0 / 291.0;
  Point2 source{0.8, 0.8};
  Point2 target{0.5, 0.1};
  double width = 0.15;
  double background = 0.03;
  std::optional<double> v0;
  std::optional<double> rho_hat;
};

Scenario generate_planar(const PlanarOptions& options);

// Undirected edges of the Delaunay triangulation of `points` (distinct).
std::vector<std::pair<VertexId, VertexId>> delaunay_edges(const std::vector<Point2>& points);

// Graph import from two CSV files: nodes with header `id,x,y` and optional
// `rho0,rhok` columns, edges with header `a,b`. Vertex ids must be 0..n-1 in
// any order. Without marginal columns both marginals are uniform.
Scenario import_graph_csv(const std::filesystem::path& nodes, const std::filesystem::path& edges, int k);

}  // namespace fdot
