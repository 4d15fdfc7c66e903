#pragma once

#include "hbvm/common.hpp"
#include "hbvm/models.hpp"
#include "hbvm/quadrature.hpp"

#include <vector>

namespace hbvm {

/// Butcher form of HBVM(k,s): A = I_s P_s^T Omega, weights b, abscissae c.
struct HbvmTableau {
  int k = 0;
  int s = 0;
  Mat A;
  Vec b;
  Vec c;
};

HbvmTableau build_tableau(int k, int s);

/// Split of the k stages into s fundamental and k-s silent ones.
///
/// Silent stages are W = a0 (x) y0 + (A_map (x) I) Z. The stage equations are
///   -e (x) y0 + Z = h (B1 (x) J) grad H(Z) + h (B2 (x) J) grad H(W)
///   y1 - y0       = h (beta1^T (x) J) grad H(Z) + h (beta2^T (x) J) grad H(W)
/// where B1/B2 are the fundamental rows of the Butcher matrix restricted to
/// fundamental/silent columns and beta1/beta2 the matching weights.
struct StagePartition {
  int k = 0;
  int s = 0;
  std::vector<int> fundamental_idx;  ///< 0-based indices into the k abscissae, increasing
  std::vector<int> silent_idx;       ///< complement, increasing
  Vec c_fundamental;                 ///< abscissae of the fundamental stages
  Vec c_silent;
  Vec a0;     ///< (k-s) Lagrange weights of the node 0
  Mat A_map;  ///< (k-s) x s Lagrange weights of the fundamental nodes
  Mat B1;     ///< s x s
  Mat B2;     ///< s x (k-s)
  Vec beta1;  ///< s
  Vec beta2;  ///< k-s
};

/// Choose s of the k Gauss nodes closest (minimax) to the uniform targets
/// (2i-1)/(2s), ties toward smaller indices, and build the silent-stage maps.
StagePartition select_fundamental(const QuadratureRule& rule, int s);

/// select_fundamental(gauss_legendre_rule(k), s).
StagePartition make_partition(int k, int s);

/// Lagrange weights on the nodes {0, c_fundamental...} evaluated at c: returns
/// (weight of 0, weights of the fundamental nodes).
std::pair<double, Vec> collocation_weights(const StagePartition& part, double c);

struct StepOptions {
  double tol = 1e-13;  ///< on |residual|_inf / (1 + |y0|_inf)
  int max_iters = 50;
  int max_halvings = 8;
};

struct StepResult {
  Vec y1;
  Mat Z;  ///< 2m x s, one column per fundamental stage
  Mat W;  ///< 2m x (k-s), silent stages
  int newton_iters = 0;
  double residual_norm = 0.0;
};

/// One HBVM(k,s) step y0 -> y1 with stepsize h (h may be negative for
/// backward stepping). Damped Newton on the fundamental stages with per-stage
/// Hessians; initial guess Z_i = y0. Throws ConvergenceError on failure.
StepResult hbvm_step(const HamiltonianModel& model, const Vec& y0, double h, const StagePartition& part,
                     const StepOptions& opts = {});

/// sigma(t0 + c h): the degree-s polynomial through y0 (at 0) and the
/// fundamental stages. `h` only fixes the time scale and does not enter the value.
Vec dense_output(const StagePartition& part, const Vec& y0, const Mat& Z, double h, double c);

/// H(y_i) - H(y_0) for every state.
std::vector<double> energy_drift(const HamiltonianModel& model, const std::vector<Vec>& trajectory);

/// n steps of size h from y0; returns the n+1 states.
std::vector<Vec> integrate(const HamiltonianModel& model, const Vec& y0, double h, int steps,
                           const StagePartition& part, const StepOptions& opts = {});

}  // namespace hbvm
