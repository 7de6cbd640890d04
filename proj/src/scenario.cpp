#include "fdot/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace fdot {

void SolverSettings::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(std::isfinite(v) && v > 0.0)) throw ValidationError(std::string("solver.") + name, "must be positive");
  };
  positive("beta", beta);
  positive("gamma", gamma);
  if (!(std::isfinite(eta) && eta >= 0.0)) throw ValidationError("solver.eta", "must be >= 0");
  positive("tol_primal", tol_primal);
  positive("tol_obj", tol_obj);
  positive("newton_tol", newton_tol);
  positive("pcg_tol", pcg_tol);
  if (max_iters < 1) throw ValidationError("solver.max_iters", "must be >= 1");
  if (newton_iters < 1) throw ValidationError("solver.newton_iters", "must be >= 1");
  if (threads < 1) throw ValidationError("solver.threads", "must be >= 1");
  if (!(std::isfinite(rho_floor) && rho_floor >= 0.0)) {
    throw ValidationError("solver.rho_floor", "must be >= 0");
  }
}

std::string to_string(FdCoupling c) { return c == FdCoupling::Joint ? "joint" : "frozen"; }

FdCoupling coupling_from_string(const std::string& s) {
  if (s == "joint") return FdCoupling::Joint;
  if (s == "frozen") return FdCoupling::Frozen;
  throw ValidationError("solver.fd_coupling", "expected \"joint\" or \"frozen\", got \"" + s + "\"");
}

FdParams FdSpec::expand(const DirectedGraph& g, int k) const {
  auto check_steps = [k](const std::vector<double>& v, const char* field) {
    if (!v.empty() && static_cast<int>(v.size()) != k) {
      throw ValidationError(field, "expected " + std::to_string(k) + " entries, got " +
                                       std::to_string(v.size()));
    }
  };
  check_steps(v0_steps, "fd.v0_steps");
  check_steps(rho_hat_steps, "fd.rho_hat_steps");

  FdParams p;
  p.enforcement = enforcement;
  p.v0.resize(g.n_edges(), k);
  p.rho_hat.resize(g.n_edges(), k);
  for (int j = 0; j < k; ++j) {
    p.v0.col(j).setConstant(v0_steps.empty() ? v0 : v0_steps[static_cast<std::size_t>(j)]);
    p.rho_hat.col(j).setConstant(rho_hat_steps.empty() ? rho_hat
                                                        : rho_hat_steps[static_cast<std::size_t>(j)]);
  }

  std::map<std::pair<VertexId, VertexId>, EdgeId> index;
  for (EdgeId e = 0; e < g.n_edges(); ++e) index[{g.edge(e).tail, g.edge(e).head}] = e;
  for (std::size_t o = 0; o < overrides.size(); ++o) {
    const auto& ov = overrides[o];
    const std::string field = "fd.edges[" + std::to_string(o) + "]";
    const auto it = index.find({ov.edge.tail, ov.edge.head});
    if (it == index.end()) throw ValidationError(field + ".edge", "no such directed edge");
    auto apply = [&](const std::vector<double>& vals, Eigen::MatrixXd& target, const char* name) {
      if (vals.empty()) return;
      if (vals.size() == 1) {
        target.row(it->second).setConstant(vals[0]);
      } else if (static_cast<int>(vals.size()) == k) {
        for (int j = 0; j < k; ++j) target(it->second, j) = vals[static_cast<std::size_t>(j)];
      } else {
        throw ValidationError(field + "." + name, "expected a number or " + std::to_string(k) + " entries");
      }
    };
    apply(ov.v0, p.v0, "v0");
    apply(ov.rho_hat, p.rho_hat, "rho_hat");
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError("fd", e.what());
  }
  return p;
}

std::optional<FdParams> Scenario::fd_params() const {
  if (!fd) return std::nullopt;
  return fd->expand(graph, k);
}

double Scenario::rho_floor() const {
  if (settings.rho_floor > 0.0) return settings.rho_floor;
  const double mass = rho0.size() > 0 ? rho0.sum() : 1.0;
  return 1e-8 * mass / std::max<VertexId>(n_vertices, 1);
}

Eigen::VectorXd apply_density_floor(const Eigen::VectorXd& rho, double floor, int* lifted,
                                    double* max_change) {
  Eigen::VectorXd out = rho;
  int n_lifted = 0;
  double deficit = 0.0;
  double headroom = 0.0;
  for (Eigen::Index v = 0; v < rho.size(); ++v) {
    if (rho[v] < floor) {
      deficit += floor - rho[v];
      out[v] = floor;
      ++n_lifted;
    } else {
      headroom += rho[v] - floor;
    }
  }
  if (n_lifted > 0 && headroom > 0.0) {
    const double scale = std::max(0.0, 1.0 - deficit / headroom);
    for (Eigen::Index v = 0; v < rho.size(); ++v) {
      if (rho[v] >= floor) out[v] = floor + (rho[v] - floor) * scale;
    }
  }
  if (lifted) *lifted = n_lifted;
  if (max_change) *max_change = rho.size() > 0 ? (out - rho).cwiseAbs().maxCoeff() : 0.0;
  return out;
}

void finalize(Scenario& s) {
  if (s.n_vertices < 1) throw ValidationError("graph.n_vertices", "must be >= 1");
  if (s.k < 1) throw ValidationError("k", "must be >= 1");
  try {
    s.graph = DirectedGraph::from_undirected_edge_list(s.pairs, s.n_vertices, s.graph_options);
  } catch (const GraphError& e) {
    throw ValidationError("graph.edges", e.what());
  }
  if (s.coordinates && static_cast<VertexId>(s.coordinates->size()) != s.n_vertices) {
    throw ValidationError("graph.coordinates", "expected " + std::to_string(s.n_vertices) +
                                                   " points, got " + std::to_string(s.coordinates->size()));
  }

  auto check_marginal = [&](const Eigen::VectorXd& r, const char* field) {
    if (r.size() != s.n_vertices) {
      throw ValidationError(field, "expected " + std::to_string(s.n_vertices) + " entries, got " +
                                       std::to_string(r.size()));
    }
    for (Eigen::Index v = 0; v < r.size(); ++v) {
      if (!std::isfinite(r[v]) || r[v] < 0.0) {
        throw ValidationError(field, "entry " + std::to_string(v) + " must be finite and >= 0");
      }
    }
    const double total = r.sum();
    if (!(total > 0.0)) throw ValidationError(field, "total mass must be positive");
    return total;
  };
  const double m0 = check_marginal(s.rho0, "marginals.rho0");
  const double mk = check_marginal(s.rhok, "marginals.rhok");
  if (std::abs(m0 - mk) > 1e-6 * std::max(m0, mk)) {
    std::ostringstream os;
    os.precision(17);
    os << "mass mismatch: rho0 sums to " << m0 << ", rhok sums to " << mk;
    throw ValidationError("marginals", os.str());
  }
  s.provenance = {};
  s.provenance.mass0 = m0;
  s.provenance.massk = mk;
  if (std::abs(m0 - 1.0) > 1e-12 || std::abs(mk - 1.0) > 1e-12) {
    s.rho0 /= m0;
    s.rhok /= mk;
    s.provenance.renormalized = true;
    std::ostringstream os;
    os.precision(17);
    os << "marginals renormalized to unit mass (rho0 total " << m0 << ", rhok total " << mk << ")";
    s.provenance.warnings.push_back(os.str());
  }

  s.settings.validate();
  if (s.fd) (void)s.fd->expand(s.graph, s.k);

  const double floor = s.rho_floor();
  s.provenance.rho_floor = floor;
  int lifted0 = 0, liftedk = 0;
  double change0 = 0.0, changek = 0.0;
  (void)apply_density_floor(s.rho0, floor, &lifted0, &change0);
  (void)apply_density_floor(s.rhok, floor, &liftedk, &changek);
  s.provenance.lifted_entries = lifted0 + liftedk;
  s.provenance.max_floor_perturbation = std::max(change0, changek);
}

}  // namespace fdot
