#include <doctest.h>

#include "fdot/render.hpp"

using namespace fdot;

namespace {

SavedTrajectory tiny() {
  SavedTrajectory t;
  t.n_vertices = 3;
  t.k = 2;
  t.edges = {{0, 1}, {1, 0}, {1, 2}, {2, 1}};
  t.rho.snapshots.resize(3, 3);
  t.rho.snapshots << 0.8, 0.3, 0.1,  //
      0.1, 0.4, 0.2,                 //
      0.1, 0.3, 0.7;
  t.momentum.steps = Eigen::MatrixXd::Zero(4, 2);
  t.momentum.steps(0, 0) = 0.5;
  t.momentum.steps(1, 0) = 0.1;
  t.momentum.steps(2, 1) = 0.4;
  t.coordinates = std::vector<Point2>{{0, 0}, {1, 0}, {2, 0}};
  return t;
}

}  // namespace

TEST_CASE("flows are netted per segment and averaged around each snapshot") {
  const auto t = tiny();
  const auto f0 = snapshot_flows(t, 0);
  REQUIRE(f0.size() == 2);
  CHECK(f0[0].flow == doctest::Approx(0.4));  // only step 1 touches snapshot 0
  const auto f1 = snapshot_flows(t, 1);
  CHECK(f1[0].flow == doctest::Approx(0.2));
  CHECK(f1[1].flow == doctest::Approx(0.2));
  CHECK(snapshot_flows(t, 2)[1].flow == doctest::Approx(0.4));
}

TEST_CASE("scales are shared across snapshots") {
  const auto s = render_scales(tiny());
  CHECK(s.max_density == 0.8);
  CHECK(s.max_flow == doctest::Approx(0.4));
}

TEST_CASE("color ramp runs blue to red") {
  CHECK(density_color(0.0) == "#0000ff");
  CHECK(density_color(1.0) == "#ff0000");
  CHECK(density_color(2.0) == "#ff0000");
}

TEST_CASE("snapshot and filmstrip SVGs") {
  const auto t = tiny();
  RenderSpec spec;
  const auto svg = render_snapshot_svg(t, 1, render_scales(t), spec);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("t = 1/2") != std::string::npos);
  const auto film = render_filmstrip_svg(t, spec);
  CHECK(film.find("t = 0/2") != std::string::npos);
  CHECK(film.find("t = 2/2") != std::string::npos);
  CHECK(render_filmstrip_svg(t, spec) == film);
}

TEST_CASE("zero momentum draws hairlines") {
  auto t = tiny();
  t.momentum.steps.setZero();
  RenderSpec spec;
  const auto svg = render_snapshot_svg(t, 1, render_scales(t), spec);
  CHECK(svg.find("stroke-width=\"0.40\"") != std::string::npos);
  CHECK(svg.find("stroke-width=\"7.00\"") == std::string::npos);
}

TEST_CASE("missing coordinates are reported") {
  auto t = tiny();
  t.coordinates.reset();
  CHECK_THROWS_WITH_AS(render_filmstrip_svg(t, {}), doctest::Contains("coordinates"), std::invalid_argument);
}

TEST_CASE("convergence plot") {
  std::vector<IterationRecord> h(3);
  for (int i = 0; i < 3; ++i) {
    h[i].iteration = i + 1;
    h[i].objective = 3.0 - i;
  }
  const auto svg = render_convergence_svg(h, 0.5);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(render_convergence_svg(h, std::nullopt).find("stroke-dasharray") == std::string::npos);
  CHECK_THROWS_AS(render_convergence_svg({}, std::nullopt), std::invalid_argument);
}
