#pragma once

// Directed graph with a signed edge-vertex incidence operator.
//
// Every undirected road segment is stored as two oriented edges at adjacent
// indices (2j forward, 2j+1 reverse). The incidence D has one row per
// oriented edge with -1 at the tail column and +1 at the head column, so
// (D x)_e = x(head) - x(tail) and (D^T m)(v) is the net inflow at v.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace fdot {

using VertexId = std::int32_t;
using EdgeId = std::int32_t;

struct Edge {
  VertexId tail = 0;
  VertexId head = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GraphOptions {
  // Disconnected graphs make arbitrary marginals infeasible; callers that set
  // this take over that responsibility.
  bool allow_disconnected = false;
  bool allow_parallel = false;
};

using IncidenceMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class DirectedGraph {
 public:
  DirectedGraph() = default;

  static DirectedGraph from_undirected_edge_list(
      std::span<const std::pair<VertexId, VertexId>> pairs, VertexId n_vertices,
      GraphOptions options = {});

  // General constructor; the resulting graph is not "paired" unless the edge
  // list happens to follow the forward/reverse layout.
  static DirectedGraph from_directed_edges(std::span<const Edge> edges, VertexId n_vertices,
                                           GraphOptions options = {});

  int n_vertices() const { return n_vertices_; }
  int n_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(EdgeId e) const { return edges_.at(static_cast<std::size_t>(e)); }

  // True when edges 2j and 2j+1 are opposite orientations of one segment.
  bool paired() const { return paired_; }
  int n_pairs() const { return paired_ ? n_edges() / 2 : 0; }

  const IncidenceMatrix& incidence() const { return incidence_; }
  std::span<const EdgeId> out_edges(VertexId v) const;
  std::span<const EdgeId> in_edges(VertexId v) const;

  // D^T m: inflow minus outflow per vertex.
  Eigen::VectorXd divergence(const Eigen::Ref<const Eigen::VectorXd>& m) const;
  // D x: head value minus tail value per edge.
  Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool is_connected() const;
  // Connected component of each vertex, labelled 0.. in order of first vertex.
  std::vector<int> component_labels() const;

 private:
  void build(GraphOptions options);

  int n_vertices_ = 0;
  bool paired_ = false;
  std::vector<Edge> edges_;
  IncidenceMatrix incidence_;
  std::vector<std::int32_t> out_offsets_, in_offsets_;
  std::vector<EdgeId> out_index_, in_index_;
};

}  // namespace fdot
