#include "fdot/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace fdot {

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

// Maps the bounding box of the points into a panel, y pointing up.
struct Frame {
  double x0, y0, scale, ox, oy;

  Frame(const std::vector<Point2>& pts, double width, double height, double margin) {
    double minx = pts.front()[0], maxx = minx, miny = pts.front()[1], maxy = miny;
    for (const auto& p : pts) {
      minx = std::min(minx, p[0]);
      maxx = std::max(maxx, p[0]);
      miny = std::min(miny, p[1]);
      maxy = std::max(maxy, p[1]);
    }
    const double w = std::max(maxx - minx, 1e-12), h = std::max(maxy - miny, 1e-12);
    const double sx = (width - 2 * margin) / w, sy = (height - 2 * margin) / h;
    scale = std::min(sx, sy);
    x0 = minx;
    y0 = miny;
    ox = 0.5 * (width - scale * (maxx - minx));
    oy = 0.5 * (height - scale * (maxy - miny));
    if (maxx - minx < 1e-9) ox = 0.5 * width;
    if (maxy - miny < 1e-9) oy = 0.5 * height;
  }
  double x(const Point2& p) const { return ox + scale * (p[0] - x0); }
  double y(const Point2& p, double height) const { return height - (oy + scale * (p[1] - y0)); }
};

void check_renderable(const SavedTrajectory& t) {
  if (!t.coordinates || t.coordinates->empty()) {
    throw std::invalid_argument(
        "trajectory has no vertex coordinates; add graph.coordinates to the scenario and solve again");
  }
  if (static_cast<int>(t.coordinates->size()) != t.n_vertices) {
    throw std::invalid_argument("coordinate count does not match the vertex count");
  }
}

std::string panel(const SavedTrajectory& t, int snapshot, const RenderScales& scales,
                  const RenderSpec& spec) {
  const auto& pts = *t.coordinates;
  const Frame f(pts, spec.width, spec.height, spec.margin + spec.max_radius);
  std::string out;
  out += "<rect width=\"" + num(spec.width) + "\" height=\"" + num(spec.height) + "\" fill=\"white\"/>\n";

  out += "<g stroke=\"#444444\" stroke-linecap=\"round\">\n";
  for (const auto& pf : snapshot_flows(t, snapshot)) {
    const double rel = scales.max_flow > 0.0 ? std::abs(pf.flow) / scales.max_flow : 0.0;
    const double w = spec.hairline + (spec.max_stroke - spec.hairline) * rel;
    const auto& a = pts[static_cast<std::size_t>(pf.a)];
    const auto& b = pts[static_cast<std::size_t>(pf.b)];
    out += "<line x1=\"" + num(f.x(a)) + "\" y1=\"" + num(f.y(a, spec.height)) + "\" x2=\"" + num(f.x(b)) +
           "\" y2=\"" + num(f.y(b, spec.height)) + "\" stroke-width=\"" + num(w) + "\"/>\n";
  }
  out += "</g>\n<g stroke=\"black\" stroke-width=\"0.3\">\n";
  for (VertexId v = 0; v < t.n_vertices; ++v) {
    const double rho = std::max(t.rho.snapshots(v, snapshot), 0.0);
    const double rel = scales.max_density > 0.0 ? rho / scales.max_density : 0.0;
    // Disc area proportional to mass.
    const double r = spec.min_radius + (spec.max_radius - spec.min_radius) * std::sqrt(rel);
    const auto& p = pts[static_cast<std::size_t>(v)];
    out += "<circle cx=\"" + num(f.x(p)) + "\" cy=\"" + num(f.y(p, spec.height)) + "\" r=\"" + num(r) +
           "\" fill=\"" + density_color(rel) + "\"/>\n";
  }
  out += "</g>\n";
  out += "<text x=\"" + num(spec.margin) + "\" y=\"" + num(spec.margin * 0.8) +
         "\" font-family=\"sans-serif\" font-size=\"12\">t = " + std::to_string(snapshot) + "/" +
         std::to_string(t.k) + "</text>\n";
  return out;
}

std::string svg_open(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
}

}  // namespace

std::vector<PairFlow> snapshot_flows(const SavedTrajectory& t, int snapshot) {
  if (snapshot < 0 || snapshot > t.k) throw std::invalid_argument("snapshot out of range");
  // Steps adjacent to snapshot i are i and i + 1 (1-based); the end
  // snapshots only have one.
  auto at = [&](EdgeId e) {
    const int lo = std::max(snapshot, 1), hi = std::min(snapshot + 1, t.k);
    return 0.5 * (t.momentum.steps(e, lo - 1) + t.momentum.steps(e, hi - 1));
  };
  std::map<std::pair<VertexId, VertexId>, std::size_t> index;
  std::vector<PairFlow> out;
  for (EdgeId e = 0; e < static_cast<EdgeId>(t.edges.size()); ++e) {
    const auto& ed = t.edges[static_cast<std::size_t>(e)];
    const VertexId a = std::min(ed.tail, ed.head), b = std::max(ed.tail, ed.head);
    const double sign = ed.tail == a ? 1.0 : -1.0;
    auto [it, fresh] = index.emplace(std::make_pair(a, b), out.size());
    if (fresh) out.push_back({a, b, 0.0});
    out[it->second].flow += sign * at(e);
  }
  return out;
}

RenderScales render_scales(const SavedTrajectory& t) {
  RenderScales s;
  s.max_density = t.rho.snapshots.size() ? t.rho.snapshots.maxCoeff() : 0.0;
  for (int i = 0; i <= t.k; ++i) {
    for (const auto& pf : snapshot_flows(t, i)) s.max_flow = std::max(s.max_flow, std::abs(pf.flow));
  }
  return s;
}

std::string density_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255.0 * t));
  const int b = 255 - r;
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x00%02x", r, b);
  return buf;
}

std::string render_snapshot_svg(const SavedTrajectory& t, int snapshot, const RenderScales& scales,
                                const RenderSpec& spec) {
  check_renderable(t);
  if (snapshot < 0 || snapshot > t.k) throw std::invalid_argument("snapshot out of range");
  return svg_open(spec.width, spec.height) + panel(t, snapshot, scales, spec) + "</svg>\n";
}

std::string render_filmstrip_svg(const SavedTrajectory& t, const RenderSpec& spec) {
  check_renderable(t);
  std::vector<int> frames = spec.snapshots;
  if (frames.empty()) {
    for (int i = 0; i <= t.k; ++i) frames.push_back(i);
  }
  const RenderScales scales = render_scales(t);
  const int cols = std::max(1, std::min(spec.filmstrip_columns, static_cast<int>(frames.size())));
  const int rows = (static_cast<int>(frames.size()) + cols - 1) / cols;
  std::string out = svg_open(cols * spec.width, rows * spec.height);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const int i = frames[f];
    if (i < 0 || i > t.k) throw std::invalid_argument("snapshot out of range");
    const int c = static_cast<int>(f) % cols, r = static_cast<int>(f) / cols;
    out += "<g transform=\"translate(" + num(c * spec.width) + "," + num(r * spec.height) + ")\">\n";
    out += panel(t, i, scales, spec);
    out += "</g>\n";
  }
  return out + "</svg>\n";
}

std::string render_convergence_svg(const std::vector<IterationRecord>& history,
                                   std::optional<double> reference, double width, double height) {
  if (history.empty()) throw std::invalid_argument("convergence history is empty");
  const double left = 70, right = 20, top = 20, bottom = 40;
  double lo = history.front().objective, hi = lo;
  for (const auto& r : history) {
    lo = std::min(lo, r.objective);
    hi = std::max(hi, r.objective);
  }
  if (reference) {
    lo = std::min(lo, *reference);
    hi = std::max(hi, *reference);
  }
  if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double it0 = history.front().iteration;
  const double it1 = std::max(history.back().iteration, history.front().iteration + 1);
  auto px = [&](double it) { return left + (width - left - right) * (it - it0) / (it1 - it0); };
  auto py = [&](double v) { return height - bottom - (height - top - bottom) * (v - lo) / (hi - lo); };

  std::string out = svg_open(width, height);
  out += "<rect width=\"" + num(width) + "\" height=\"" + num(height) + "\" fill=\"white\"/>\n";
  out += "<g stroke=\"black\" stroke-width=\"1\">\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(height - bottom) + "\" x2=\"" + num(width - right) +
         "\" y2=\"" + num(height - bottom) + "\"/>\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" +
         num(height - bottom) + "\"/>\n</g>\n";
  out += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = lo + (hi - lo) * tick / 4.0;
    const double it = it0 + (it1 - it0) * tick / 4.0;
    out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(v) + 4) + "\" text-anchor=\"end\">" + sci(v) +
           "</text>\n";
    out += "<text x=\"" + num(px(it)) + "\" y=\"" + num(height - bottom + 16) + "\" text-anchor=\"middle\">" +
           sci(std::round(it)) + "</text>\n";
  }
  out += "<text x=\"" + num(0.5 * (left + width - right)) + "\" y=\"" + num(height - 6) +
         "\" text-anchor=\"middle\">iteration</text>\n</g>\n";
  if (reference) {
    out += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(*reference)) + "\" x2=\"" + num(width - right) +
           "\" y2=\"" + num(py(*reference)) + "\" stroke=\"#cc0000\" stroke-dasharray=\"6,4\"/>\n";
  }
  out += "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
  const std::size_t stride = (history.size() + 1999) / 2000;
  for (std::size_t i = 0; i < history.size(); i += stride) {
    if (i) out += ' ';
    out += num(px(history[i].iteration)) + "," + num(py(history[i].objective));
  }
  if ((history.size() - 1) % stride != 0) {
    out += ' ' + num(px(history.back().iteration)) + "," + num(py(history.back().objective));
  }
  out += "\"/>\n</svg>\n";
  return out;
}

}  // namespace fdot
