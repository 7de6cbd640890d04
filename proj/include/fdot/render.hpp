#pragma once

// SVG output: density snapshots on the graph embedding and convergence plots.

#include <optional>
#include <string>
#include <vector>

#include "fdot/admm_solver.hpp"
#include "fdot/scenario_io.hpp"

namespace fdot {

struct RenderSpec {
  std::vector<int> snapshots;  // empty draws all of 0..k
  double width = 480.0;        // one panel
  double height = 360.0;
  double margin = 24.0;
  double min_radius = 1.5;
  double max_radius = 9.0;
  double hairline = 0.4;
  double max_stroke = 7.0;
  int filmstrip_columns = 4;
};

// Color and size scales shared by all snapshots of one run.
struct RenderScales {
  double max_density = 0.0;
  double max_flow = 0.0;
};

// Net flow on each undirected pair at snapshot i (0..k): momenta of the
// neighbouring steps averaged, forward minus reverse orientation.
struct PairFlow {
  VertexId a = 0;
  VertexId b = 0;
  double flow = 0.0;  // > 0 moves mass a -> b
};
std::vector<PairFlow> snapshot_flows(const SavedTrajectory& trajectory, int snapshot);

RenderScales render_scales(const SavedTrajectory& trajectory);

// Linear blue -> red ramp on t in [0, 1], as "#rrggbb".
std::string density_color(double t);

// Throws std::invalid_argument when the trajectory has no coordinates or the
// snapshot is out of range.
std::string render_snapshot_svg(const SavedTrajectory& trajectory, int snapshot,
                                const RenderScales& scales, const RenderSpec& spec);
std::string render_filmstrip_svg(const SavedTrajectory& trajectory, const RenderSpec& spec);

// Objective against iteration, with a dashed horizontal line at `reference`.
// Throws std::invalid_argument on an empty history.
std::string render_convergence_svg(const std::vector<IterationRecord>& history,
                                   std::optional<double> reference, double width = 640.0,
                                   double height = 400.0);

}  // namespace fdot
