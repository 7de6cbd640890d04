#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fdot/scenario_io.hpp"

namespace fdot {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementations.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

Eigen::VectorXd mix_with_background(Eigen::VectorXd bump, double background) {
  const double total = bump.sum();
  if (!(total > 0.0)) throw std::invalid_argument("bump has no mass");
  bump /= total;
  const auto n = static_cast<double>(bump.size());
  Eigen::VectorXd out = (1.0 - background) * bump + Eigen::VectorXd::Constant(bump.size(), background / n);
  return out / out.sum();
}

void attach_fd(Scenario& s, const std::optional<double>& v0, const std::optional<double>& rho_hat) {
  if (!v0 && !rho_hat) return;
  if (!v0 || !rho_hat) throw std::invalid_argument("both v0 and rho_hat are needed to enable the FD cap");
  FdSpec spec;
  spec.v0 = *v0;
  spec.rho_hat = *rho_hat;
  s.fd = spec;
}

struct Triangle {
  std::array<int, 3> v;
  double cx, cy, r2;
};

Triangle make_triangle(const std::vector<Point2>& p, int a, int b, int c) {
  const double ax = p[a][0], ay = p[a][1];
  const double bx = p[b][0] - ax, by = p[b][1] - ay;
  const double cx = p[c][0] - ax, cy = p[c][1] - ay;
  const double d = 2.0 * (bx * cy - by * cx);
  const double b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  const double ux = (cy * b2 - by * c2) / d;
  const double uy = (bx * c2 - cx * b2) / d;
  return Triangle{{a, b, c}, ax + ux, ay + uy, ux * ux + uy * uy};
}

}  // namespace

std::vector<std::pair<VertexId, VertexId>> delaunay_edges(const std::vector<Point2>& input) {
  const int n = static_cast<int>(input.size());
  if (n < 2) return {};
  if (n == 2) return {{0, 1}};

  double minx = input[0][0], maxx = minx, miny = input[0][1], maxy = miny;
  for (const auto& q : input) {
    minx = std::min(minx, q[0]);
    maxx = std::max(maxx, q[0]);
    miny = std::min(miny, q[1]);
    maxy = std::max(maxy, q[1]);
  }
  const double span = std::max({maxx - minx, maxy - miny, 1e-12});
  const double mx = 0.5 * (minx + maxx), my = 0.5 * (miny + maxy);
  std::vector<Point2> p = input;
  p.push_back({mx - 20.0 * span, my - 10.0 * span});
  p.push_back({mx + 20.0 * span, my - 10.0 * span});
  p.push_back({mx, my + 20.0 * span});

  // Bowyer-Watson.
  std::vector<Triangle> tris{make_triangle(p, n, n + 1, n + 2)};
  for (int i = 0; i < n; ++i) {
    const double px = p[i][0], py = p[i][1];
    std::map<std::pair<int, int>, int> boundary;
    std::vector<Triangle> keep;
    keep.reserve(tris.size() + 2);
    for (const auto& t : tris) {
      const double dx = px - t.cx, dy = py - t.cy;
      if (dx * dx + dy * dy < t.r2 * (1.0 + 1e-12)) {
        for (int e = 0; e < 3; ++e) {
          int a = t.v[e], b = t.v[(e + 1) % 3];
          if (a > b) std::swap(a, b);
          ++boundary[{a, b}];
        }
      } else {
        keep.push_back(t);
      }
    }
    for (const auto& [edge, count] : boundary) {
      if (count == 1) keep.push_back(make_triangle(p, edge.first, edge.second, i));
    }
    tris = std::move(keep);
  }

  std::map<std::pair<int, int>, bool> edges;
  for (const auto& t : tris) {
    for (int e = 0; e < 3; ++e) {
      int a = t.v[e], b = t.v[(e + 1) % 3];
      if (a >= n || b >= n) continue;
      if (a > b) std::swap(a, b);
      edges[{a, b}] = true;
    }
  }
  std::vector<std::pair<VertexId, VertexId>> out;
  out.reserve(edges.size());
  for (const auto& [e, _] : edges) out.emplace_back(e.first, e.second);
  return out;
}

Scenario generate_line(const LineOptions& o) {
  if (o.n < 2) throw std::invalid_argument("line needs n >= 2");
  if (o.k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(o.width > 0.0)) throw std::invalid_argument("width must be positive");
  if (!(o.background >= 0.0 && o.background < 1.0)) throw std::invalid_argument("background must be in [0, 1)");
  Scenario s;
  s.n_vertices = o.n;
  for (int v = 0; v + 1 < o.n; ++v) s.pairs.emplace_back(v, v + 1);
  std::vector<Point2> pts;
  for (int v = 0; v < o.n; ++v) pts.push_back({static_cast<double>(v), 0.0});
  s.coordinates = std::move(pts);
  s.k = o.k;

  if (o.n == 2) {
    s.rho0 = Eigen::Vector2d(1.0, 0.0);
    s.rhok = Eigen::Vector2d(0.0, 1.0);
  } else {
    const double len = o.n - 1;
    const double sigma = o.width * len;
    Eigen::VectorXd b0(o.n), bk(o.n);
    for (int v = 0; v < o.n; ++v) {
      const double d0 = (v - o.source * len) / sigma, dk = (v - o.target * len) / sigma;
      b0[v] = std::exp(-0.5 * d0 * d0);
      bk[v] = std::exp(-0.5 * dk * dk);
    }
    s.rho0 = mix_with_background(b0, o.background);
    s.rhok = mix_with_background(bk, o.background);
  }
  attach_fd(s, o.v0, o.rho_hat);
  finalize(s);
  return s;
}

Scenario generate_planar(const PlanarOptions& o) {
  if (o.n < 10) throw std::invalid_argument("planar generator needs n >= 10");
  if (o.k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(o.width > 0.0)) throw std::invalid_argument("width must be positive");
  if (!(o.background >= 0.0 && o.background < 1.0)) throw std::invalid_argument("background must be in [0, 1)");
  std::mt19937_64 rng(o.seed);

  // Points with a minimum spacing so that no two intersections coincide.
  const double min_dist = 0.35 / std::sqrt(static_cast<double>(o.n));
  std::vector<Point2> pts;
  int attempts = 0;
  while (static_cast<int>(pts.size()) < o.n) {
    const Point2 q{unit_uniform(rng), unit_uniform(rng)};
    bool ok = true;
    if (++attempts < 1000 * o.n) {
      for (const auto& r : pts) {
        const double dx = q[0] - r[0], dy = q[1] - r[1];
        if (dx * dx + dy * dy < min_dist * min_dist) {
          ok = false;
          break;
        }
      }
    }
    if (ok) pts.push_back(q);
  }

  auto candidates = delaunay_edges(pts);
  auto length = [&](const std::pair<VertexId, VertexId>& e) {
    return std::hypot(pts[e.first][0] - pts[e.second][0], pts[e.first][1] - pts[e.second][1]);
  };
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](const auto& a, const auto& b) { return length(a) < length(b); });

  // Euclidean minimum spanning tree (Kruskal) keeps the graph connected.
  std::vector<int> parent(static_cast<std::size_t>(o.n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  std::vector<std::pair<VertexId, VertexId>> chosen, rest;
  for (const auto& e : candidates) {
    const int a = find(e.first), b = find(e.second);
    if (a != b) {
      parent[static_cast<std::size_t>(a)] = b;
      chosen.push_back(e);
    } else {
      rest.push_back(e);
    }
  }

  const auto target_pairs = static_cast<std::size_t>(std::llround(o.n * o.directed_per_vertex / 2.0));
  for (std::size_t i = rest.size(); i > 1; --i) {
    std::swap(rest[i - 1], rest[static_cast<std::size_t>(uniform_below(rng, i))]);
  }
  for (const auto& e : rest) {
    if (chosen.size() >= target_pairs) break;
    chosen.push_back(e);
  }
  std::sort(chosen.begin(), chosen.end());

  Scenario s;
  s.n_vertices = o.n;
  s.pairs = std::move(chosen);
  s.k = o.k;
  Eigen::VectorXd b0(o.n), bk(o.n);
  for (int v = 0; v < o.n; ++v) {
    const auto& q = pts[static_cast<std::size_t>(v)];
    const double d0 = std::hypot(q[0] - o.source[0], q[1] - o.source[1]) / o.width;
    const double dk = std::hypot(q[0] - o.target[0], q[1] - o.target[1]) / o.width;
    b0[v] = std::exp(-0.5 * d0 * d0);
    bk[v] = std::exp(-0.5 * dk * dk);
  }
  s.rho0 = mix_with_background(b0, o.background);
  s.rhok = mix_with_background(bk, o.background);
  s.coordinates = std::move(pts);
  attach_fd(s, o.v0, o.rho_hat);
  finalize(s);
  return s;
}

}  // namespace fdot
