#include "fdot/graph.hpp"

#include <numeric>
#include <set>
#include <string>

namespace fdot {

namespace {

std::string edge_str(VertexId a, VertexId b) {
  return "(" + std::to_string(a) + ", " + std::to_string(b) + ")";
}

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[static_cast<std::size_t>(b)] = a;
    return true;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

DirectedGraph DirectedGraph::from_undirected_edge_list(
    std::span<const std::pair<VertexId, VertexId>> pairs, VertexId n_vertices,
    GraphOptions options) {
  if (n_vertices <= 0) throw GraphError("graph needs at least one vertex");
  std::set<std::pair<VertexId, VertexId>> seen;
  DirectedGraph g;
  g.n_vertices_ = n_vertices;
  g.edges_.reserve(2 * pairs.size());
  for (const auto& [a, b] : pairs) {
    if (a < 0 || b < 0 || a >= n_vertices || b >= n_vertices) {
      throw GraphError("edge " + edge_str(a, b) + " references a vertex outside [0, " +
                       std::to_string(n_vertices) + ")");
    }
    if (a == b) throw GraphError("self-loop at vertex " + std::to_string(a));
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second && !options.allow_parallel) {
      throw GraphError("duplicate undirected edge " + edge_str(a, b));
    }
    g.edges_.push_back({a, b});
    g.edges_.push_back({b, a});
  }
  g.paired_ = true;
  g.build(options);
  return g;
}

DirectedGraph DirectedGraph::from_directed_edges(std::span<const Edge> edges, VertexId n_vertices,
                                                 GraphOptions options) {
  if (n_vertices <= 0) throw GraphError("graph needs at least one vertex");
  std::set<std::pair<VertexId, VertexId>> seen;
  DirectedGraph g;
  g.n_vertices_ = n_vertices;
  for (const auto& e : edges) {
    if (e.tail < 0 || e.head < 0 || e.tail >= n_vertices || e.head >= n_vertices) {
      throw GraphError("edge " + edge_str(e.tail, e.head) + " references a vertex outside [0, " +
                       std::to_string(n_vertices) + ")");
    }
    if (e.tail == e.head) throw GraphError("self-loop at vertex " + std::to_string(e.tail));
    if (!seen.insert({e.tail, e.head}).second && !options.allow_parallel) {
      throw GraphError("duplicate directed edge " + edge_str(e.tail, e.head));
    }
  }
  g.edges_.assign(edges.begin(), edges.end());
  g.paired_ = !edges.empty() && edges.size() % 2 == 0;
  for (std::size_t j = 0; g.paired_ && j + 1 < edges.size(); j += 2) {
    g.paired_ = edges[j].tail == edges[j + 1].head && edges[j].head == edges[j + 1].tail;
  }
  g.build(options);
  return g;
}

void DirectedGraph::build(GraphOptions options) {
  const auto m = edges_.size();
  const auto n = static_cast<std::size_t>(n_vertices_);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * m);
  for (std::size_t e = 0; e < m; ++e) {
    triplets.emplace_back(static_cast<int>(e), edges_[e].tail, -1.0);
    triplets.emplace_back(static_cast<int>(e), edges_[e].head, +1.0);
  }
  incidence_.resize(static_cast<int>(m), n_vertices_);
  incidence_.setFromTriplets(triplets.begin(), triplets.end());
  incidence_.makeCompressed();

  // CSR adjacency in both directions, stable in edge order.
  out_offsets_.assign(n + 1, 0);
  in_offsets_.assign(n + 1, 0);
  for (const auto& e : edges_) {
    ++out_offsets_[static_cast<std::size_t>(e.tail) + 1];
    ++in_offsets_[static_cast<std::size_t>(e.head) + 1];
  }
  std::partial_sum(out_offsets_.begin(), out_offsets_.end(), out_offsets_.begin());
  std::partial_sum(in_offsets_.begin(), in_offsets_.end(), in_offsets_.begin());
  out_index_.resize(m);
  in_index_.resize(m);
  auto out_cursor = out_offsets_;
  auto in_cursor = in_offsets_;
  for (std::size_t e = 0; e < m; ++e) {
    out_index_[static_cast<std::size_t>(out_cursor[static_cast<std::size_t>(edges_[e].tail)]++)] =
        static_cast<EdgeId>(e);
    in_index_[static_cast<std::size_t>(in_cursor[static_cast<std::size_t>(edges_[e].head)]++)] =
        static_cast<EdgeId>(e);
  }

  if (!options.allow_disconnected && !is_connected()) {
    throw GraphError("graph is not connected; transport between arbitrary marginals is infeasible");
  }
}

std::span<const EdgeId> DirectedGraph::out_edges(VertexId v) const {
  const auto b = static_cast<std::size_t>(out_offsets_.at(static_cast<std::size_t>(v)));
  const auto e = static_cast<std::size_t>(out_offsets_.at(static_cast<std::size_t>(v) + 1));
  return std::span<const EdgeId>(out_index_).subspan(b, e - b);
}

std::span<const EdgeId> DirectedGraph::in_edges(VertexId v) const {
  const auto b = static_cast<std::size_t>(in_offsets_.at(static_cast<std::size_t>(v)));
  const auto e = static_cast<std::size_t>(in_offsets_.at(static_cast<std::size_t>(v) + 1));
  return std::span<const EdgeId>(in_index_).subspan(b, e - b);
}

Eigen::VectorXd DirectedGraph::divergence(const Eigen::Ref<const Eigen::VectorXd>& m) const {
  if (m.size() != n_edges()) {
    throw GraphError("divergence: expected " + std::to_string(n_edges()) +
                     " edge values, got " + std::to_string(m.size()));
  }
  return incidence_.transpose() * m;
}

Eigen::VectorXd DirectedGraph::gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n_vertices_) {
    throw GraphError("gradient: expected " + std::to_string(n_vertices_) +
                     " vertex values, got " + std::to_string(x.size()));
  }
  return incidence_ * x;
}

bool DirectedGraph::is_connected() const {
  UnionFind uf(n_vertices_);
  int components = n_vertices_;
  for (const auto& e : edges_) {
    if (uf.unite(e.tail, e.head)) --components;
  }
  return components == 1;
}

std::vector<int> DirectedGraph::component_labels() const {
  UnionFind uf(n_vertices_);
  for (const auto& e : edges_) uf.unite(e.tail, e.head);
  std::vector<int> label(static_cast<std::size_t>(n_vertices_), -1), by_root(label.size(), -1);
  int next = 0;
  for (VertexId v = 0; v < n_vertices_; ++v) {
    auto& r = by_root[static_cast<std::size_t>(uf.find(v))];
    if (r < 0) r = next++;
    label[static_cast<std::size_t>(v)] = r;
  }
  return label;
}

}  // namespace fdot
