#pragma once

#include "hbvm/bvp_newton.hpp"
#include "hbvm/common.hpp"
#include "hbvm/method.hpp"
#include "hbvm/models.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hbvm {

/// Method and mesh shared by the orbit and transfer drivers.
struct MissionSetup {
  double mu = kSunEarthMu;
  int k = 6;
  int s = 2;
  int n = 100;
  NewtonOptions newton{1e-10, 50, 8, 3, JacobianMode::Exact};
  /// Phase condition B_a y_0 = b_0. Empty means q2(0) = 0, which both
  /// linearized guesses satisfy at their starting node.
  std::optional<Mat> anchor_rows;
  std::optional<Vec> anchor_values;
};

struct OrbitResult {
  MeshSolution mesh;
  double period_days = 0.0;
  double energy = 0.0;            ///< H(y_0)
  double max_energy_drift = 0.0;  ///< max_i |H(y_i) - H(y_0)| / |H(y_0)|
  std::string classification;
};

struct TransferResult {
  MeshSolution mesh;              ///< extended state (y, lambda) at the nodes
  std::vector<Vec> control;       ///< u = -lambda_p at each node
  double cost = 0.0;              ///< 1/2 int |u|^2 dt with the method's k-point rule
  double initial_mismatch = 0.0;  ///< |state(y_0) - P1|_inf
  double final_mismatch = 0.0;    ///< |state(y_n) - P2|_inf
  double hamiltonian_error = 0.0; ///< Hhat(y_n) - Hhat(y_0)
  double max_relative_drift = 0.0;
};

enum class GuessPlane {
  InPlane,     ///< center mode of the x-y motion
  OutOfPlane,  ///< ellipse in the plane x = x_eq, starting at its top
};

struct GuessShape {
  double amplitude = 1e-3;  ///< largest position semi-axis
  /// Out-of-plane only: y semi-axis over z semi-axis.
  double aspect = 1.0;
  /// Period of the sampled curve in nondimensional time; 0 takes 2 pi / omega.
  double period = 0.0;
};

/// Center frequencies (in-plane, out-of-plane) of the linearization at an
/// equilibrium. The out-of-plane entry is 0 for planar models.
std::pair<double, double> center_frequencies(const HamiltonianModel& model, const Vec& equilibrium);

/// One period of a linearized center-mode ellipse sampled at n + 1 uniform times.
/// In-plane guesses start on the x axis (q2 = 0) on the far side of the equilibrium.
MeshSolution initial_guess_linearized(const HamiltonianModel& model, const Vec& equilibrium, const GuessShape& shape,
                                      int n, GuessPlane plane, const StagePartition& part);

/// Sun-Earth L2 equilibrium state of the planar or spatial CRTBP.
Vec l2_state(double mu, bool spatial);

/// Convenience guesses used by the drivers and the CLI.
MeshSolution lyapunov_guess(const MissionSetup& setup, double amplitude = 1e-2);
MeshSolution halo_guess(const MissionSetup& setup, const GuessShape& shape = {5e-3, 2.0, 0.0});

/// The guess is re-meshed to setup.n intervals if needed; h is set from T.
OrbitResult lyapunov_by_period(const MissionSetup& setup, double T_days, const MeshSolution& guess);
OrbitResult lyapunov_by_energy(const MissionSetup& setup, double H_target, const MeshSolution& guess);
OrbitResult halo_by_period(const MissionSetup& setup, double T_days, const MeshSolution& guess);
OrbitResult halo_by_energy(const MissionSetup& setup, double H_target, const MeshSolution& guess);

/// Periodic mesh resampled to n intervals with the dense output of each interval.
MeshSolution resample_periodic(const MeshSolution& mesh, int n, const StagePartition& from,
                               const StagePartition& to);

/// Hill deployment: both states of the planar Hill problem fixed, costates free.
/// `warm` (same n) replaces the default guess of a straight line with zero costates.
TransferResult hill_transfer(const Vec& P1, const Vec& P2, double tf, const MissionSetup& setup,
                             const MeshSolution* warm = nullptr);

/// Index of the node with the largest q3.
int topmost_node(const MeshSolution& orbit);

/// Transfer from the topmost node of orbit A to that of orbit B in T_days.
/// The guess blends the two orbits node by node with zero costates.
TransferResult halo_transfer(const OrbitResult& A, const OrbitResult& B, double T_days, const MissionSetup& setup);

/// Accumulated turning angle / 2 pi of the planar path (q1, q2) about (cx, cy).
/// Nodes closer than `min_radius` to the center are skipped.
double winding_number(const std::vector<Vec>& y, double cx, double cy, double min_radius = 1e-12);

/// Outcome of one continuation step.
template <class R>
struct ContinuationStep {
  double parameter = 0.0;
  std::optional<R> result;
  std::string error;
  bool converged() const { return result.has_value(); }
};

/// Solves the driver for each parameter in order, warm-starting from the last
/// converged mesh. Failures are recorded and the sequence goes on.
template <class R>
std::vector<ContinuationStep<R>> continuation(const std::function<R(double, const MeshSolution&)>& driver,
                                              const std::vector<double>& params, const MeshSolution& start) {
  for (size_t i = 1; i < params.size(); ++i) {
    const double d0 = params[1] - params[0], di = params[i] - params[i - 1];
    if (d0 * di <= 0.0) throw DomainError("continuation: parameters must be strictly monotone");
  }
  std::vector<ContinuationStep<R>> out;
  MeshSolution warm = start;
  for (double p : params) {
    ContinuationStep<R> step;
    step.parameter = p;
    try {
      step.result = driver(p, warm);
      warm = step.result->mesh;
    } catch (const Error& e) {
      step.error = e.what();
    }
    out.push_back(std::move(step));
  }
  return out;
}

}  // namespace hbvm
