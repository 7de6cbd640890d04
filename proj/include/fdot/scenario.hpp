#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fdot/fundamental_diagram.hpp"
#include "fdot/graph.hpp"
#include "fdot/settings.hpp"

namespace fdot {

class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& field, const std::string& reason)
      : std::runtime_error(field + ": " + reason), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Per-edge FD override. Each value holds one entry (constant in time) or k
// entries (one per step).
struct FdEdgeOverride {
  Edge edge;
  std::vector<double> v0;
  std::vector<double> rho_hat;
};

// FD description as written in a scenario file.
struct FdSpec {
  double v0 = 1.0;
  double rho_hat = 1.0;
  std::vector<double> v0_steps;       // empty or length k; replaces the default per step
  std::vector<double> rho_hat_steps;  // empty or length k
  std::vector<FdEdgeOverride> overrides;
  Enforcement enforcement = Enforcement::InteriorSteps;

  FdParams expand(const DirectedGraph& g, int k) const;
};

struct Provenance {
  double mass0 = 1.0;  // totals as given, before normalization
  double massk = 1.0;
  bool renormalized = false;
  double rho_floor = 0.0;
  int lifted_entries = 0;
  double max_floor_perturbation = 0.0;
  std::vector<std::string> warnings;
};

using Point2 = std::array<double, 2>;

struct Scenario {
  VertexId n_vertices = 0;
  std::vector<std::pair<VertexId, VertexId>> pairs;
  std::optional<std::vector<Point2>> coordinates;
  GraphOptions graph_options;
  Eigen::VectorXd rho0;  // normalized to unit mass
  Eigen::VectorXd rhok;
  int k = 1;
  std::optional<FdSpec> fd;
  SolverSettings settings;

  // Filled by finalize().
  DirectedGraph graph;
  Provenance provenance;

  std::optional<FdParams> fd_params() const;
  // Settings floor, or 1e-8 * mass / n when unset.
  double rho_floor() const;
};

// Builds the graph, validates every field, normalizes the marginals and
// records what was changed in `provenance`. Throws ValidationError.
void finalize(Scenario& scenario);

// Lifts entries below `floor` to the floor and takes the excess back from the
// entries above it in proportion to their headroom, so the total is
// unchanged and every entry is >= floor. Idempotent.
Eigen::VectorXd apply_density_floor(const Eigen::VectorXd& rho, double floor,
                                    int* lifted = nullptr, double* max_change = nullptr);

}  // namespace fdot
