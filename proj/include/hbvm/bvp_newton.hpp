#pragma once

#include "hbvm/common.hpp"
#include "hbvm/method.hpp"
#include "hbvm/models.hpp"
#include "hbvm/structured_linalg.hpp"

#include <functional>
#include <memory>
#include <variant>
#include <vector>

namespace hbvm {

/// g_a(y_0) = 0 (r conditions) and g_b(y_n) = 0 (2m - r conditions).
struct Separated {
  std::function<Vec(const Vec&)> ga;
  std::function<Mat(const Vec&)> ga_jacobian;
  std::function<Vec(const Vec&)> gb;
  std::function<Mat(const Vec&)> gb_jacobian;
};

/// g(y_0, y_n) = 0, 2m conditions.
struct NonSeparated {
  std::function<Vec(const Vec&, const Vec&)> g;
  std::function<Mat(const Vec&, const Vec&)> g_y0;
  std::function<Mat(const Vec&, const Vec&)> g_yn;
};

/// y_n = y_0 with anchors B_a y_0 = b_0; the stepsize is fixed.
struct PeriodicAnchored {
  Mat Ba;
  Vec b0;
};

/// y_n = y_0, anchors, and H(y_0) = H_target; the stepsize is an unknown.
struct PeriodicEnergy {
  Mat Ba;
  Vec b0;
  double H_target = 0.0;
};

using BoundarySpec = std::variant<Separated, NonSeparated, PeriodicAnchored, PeriodicEnergy>;

/// Fixes selected components: y_0[i] = a[i] for i in `first`, y_n[j] = b[j] for j in `last`.
Separated fix_components(const std::vector<int>& first, const Vec& a, const std::vector<int>& last, const Vec& b);

struct NewtonReport {
  int iterations = 0;
  std::vector<double> residual_history;  ///< max-norm of the nonlinear residual at each iterate
  std::vector<double> step_history;      ///< max-norm of each Newton update (before damping)
  std::vector<double> condition_estimates;
  int damping_events = 0;                ///< iterations whose update had to be shortened
  double lsq_residual = 0.0;             ///< final least-squares residual (periodic specs)
  double final_residual = 0.0;           ///< max-norm of the residual at the returned iterate
  bool converged = false;
};

struct MeshSolution {
  double t0 = 0.0;
  double h = 0.0;
  std::vector<Vec> y;  ///< n + 1 nodes; for periodic specs y[n] == y[0]
  std::vector<Mat> Z;  ///< n stage blocks, 2m x s
  NewtonReport report;

  int n() const { return static_cast<int>(Z.size()); }
  double period() const { return h * n(); }
};

/// Mesh with stages linearly interpolated between consecutive nodes.
MeshSolution mesh_from_nodes(const std::vector<Vec>& nodes, double t0, double h, const StagePartition& part);

enum class JacobianMode {
  Midpoint,  ///< one Hessian per interval at (y_{i-1} + y_i)/2 (simplified Newton)
  Exact,     ///< Hessians at every fundamental and silent stage
};

struct NewtonOptions {
  double tol = 1e-10;
  int max_iters = 50;
  int max_halvings = 8;
  int divergence_limit = 3;  ///< abort after this many consecutive iterations failing the monotonicity test
  JacobianMode jacobian = JacobianMode::Midpoint;
};

/// Thrown when the iteration fails; carries the iterate with the smallest residual.
class NewtonFailure : public ConvergenceError {
 public:
  NewtonFailure(const std::string& what, MeshSolution best)
      : ConvergenceError(what, best.report.iterations, best.report.final_residual),
        best_(std::make_shared<MeshSolution>(std::move(best))) {}
  const MeshSolution& best() const { return *best_; }

 private:
  std::shared_ptr<const MeshSolution> best_;
};

/// Midpoint-Hessian blocks (V, U^T, L, K) of one interval; the rhs fields are left empty.
IntervalBlocks assemble_interval_blocks(const HamiltonianModel& model, const StagePartition& part,
                                        const Vec& y_left, const Vec& y_right, double h);

/// Blocks with a Hessian per stage (the exact Jacobian of the interval residual).
IntervalBlocks exact_interval_blocks(const HamiltonianModel& model, const StagePartition& part, const Vec& y_left,
                                     const Mat& Z, double h);

struct IntervalRhs {
  Vec stage;  ///< c_i, 2ms: minus the stage residual
  Vec step;   ///< b_i, 2m: minus the step residual
};

/// Negated residuals of the stage and step equations on every interval
/// (silent stages eliminated). `y` holds n + 1 nodes.
std::vector<IntervalRhs> residuals(const HamiltonianModel& model, const StagePartition& part,
                                   const std::vector<Vec>& y, const std::vector<Mat>& Z, double h);

struct BorderColumns {
  Vec w;  ///< d(stage residual)/dh
  Vec v;  ///< d(step residual)/dh
};

/// Derivatives of the interval residuals with respect to the stepsize.
std::vector<BorderColumns> h_border_columns(const HamiltonianModel& model, const StagePartition& part,
                                            const std::vector<Vec>& y, const std::vector<Mat>& Z, double h);

/// Full nonlinear residual in the row order of the assembled linear system.
Vec global_residual(const HamiltonianModel& model, const StagePartition& part, const BoundarySpec& spec,
                    const MeshSolution& mesh);

/// Newton linear system at the current iterate (rhs = minus the residual).
BlockSystem newton_system(const HamiltonianModel& model, const StagePartition& part, const BoundarySpec& spec,
                          const MeshSolution& mesh, JacobianMode mode = JacobianMode::Midpoint);

/// Unknowns in the column order of newton_system, and the inverse update x -> mesh + lambda x.
Vec pack_unknowns(const BoundarySpec& spec, const MeshSolution& mesh);
MeshSolution apply_update(const BoundarySpec& spec, const MeshSolution& mesh, const Vec& x, double lambda = 1.0);

MeshSolution newton_solve(const HamiltonianModel& model, const StagePartition& part, const BoundarySpec& spec,
                          const MeshSolution& mesh0, const NewtonOptions& opts = {});

}  // namespace hbvm
