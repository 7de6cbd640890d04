#pragma once

#include <string>

namespace fdot {

// How the capacity copy q is tied to the densities.
//  - Joint: q and a copy s of the midpoint densities are projected together
//    onto the FD hypograph {0 <= q <= Q(s)}, and s = midpoint(rho) is a
//    further consensus constraint. Fixed points are KKT points of the
//    FD-constrained program.
//  - Frozen: q is clamped onto [0, Q(midpoint(rho^t))] with rho frozen at the
//    current iterate and the density update ignores the cap.
enum class FdCoupling { Joint, Frozen };

struct SolverSettings {
  double beta = 60.0;   // continuity penalty
  double gamma = 50.0;  // consensus penalty m = q
  double eta = 0.0;     // consensus penalty s = midpoint(rho); 0 selects gamma
  double tol_primal = 1e-8;
  double tol_obj = 1e-10;
  int max_iters = 200000;
  int newton_iters = 30;
  double newton_tol = 1e-10;
  double rho_floor = 0.0;  // 0 selects 1e-8 * mass / n_vertices
  bool record_history = true;
  FdCoupling coupling = FdCoupling::Joint;
  int threads = 1;
  int direct_max_edges = 20000;  // above this the momentum solve switches to PCG
  double pcg_tol = 1e-10;

  double effective_eta() const { return eta > 0.0 ? eta : gamma; }
  void validate() const;
};

std::string to_string(FdCoupling c);
FdCoupling coupling_from_string(const std::string& s);

}  // namespace fdot
