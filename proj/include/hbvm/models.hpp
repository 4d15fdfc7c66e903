#pragma once

#include "hbvm/common.hpp"

#include <array>
#include <memory>
#include <string>

namespace hbvm {

/// Evaluation contract for an autonomous Hamiltonian H on R^{2m}, state y = (q, p).
/// The flow is y' = J grad H(y) with J = [0 I; -I 0].
class HamiltonianModel {
 public:
  virtual ~HamiltonianModel() = default;

  virtual int dim() const = 0;
  virtual std::string name() const = 0;
  virtual double energy(const Vec& y) const = 0;
  virtual Vec gradient(const Vec& y) const = 0;
  virtual Mat hessian(const Vec& y) const = 0;

  /// Directional derivative of the Hessian, sum_l d^3H/dy_i dy_j dy_l * dir_l.
  /// The default uses a central difference of hessian() along `dir`.
  virtual Mat hessian_derivative(const Vec& y, const Vec& dir) const;

  Vec vector_field(const Vec& y) const { return apply_j(gradient(y)); }
};

using ModelPtr = std::shared_ptr<const HamiltonianModel>;

// ---------------------------------------------------------------------------
// Circular restricted three-body problem (rotating frame, barycentric).

struct CrtbpParams {
  double mu = 3.04036e-6;
  bool spatial = true;  ///< 2m = 6 if true, planar 2m = 4 otherwise
};

/// Sun / Earth+Moon normalisation constants.
struct PhysicalConstants {
  static constexpr double R_km = 1.49589e8;
  static constexpr double omega_rad_s = 1.99099e-7;
  static constexpr double seconds_per_day = 86400.0;
};

inline constexpr double kSunEarthMu = 3.04036e-6;

/// Points closer than this to a primary (or to the origin of the Hill problem)
/// are rejected with DomainError.
inline constexpr double kSingularityGuard = 1e-9;

/// H = p1 q2 - p2 q1 + |p|^2/2 - (1-mu)/r1 - mu/r2.
ModelPtr crtbp_model(const CrtbpParams& params);

/// H = p1 q2 - p2 q1 + (p1^2+p2^2)/2 - 1/|q| + q2^2/2 - q1^2 (Earth-centred, mu-free).
ModelPtr hill_model();

/// Pontryagin extension of a base Hamiltonian on R^{2m}:
///   Hhat(y, lambda) = lambda^T J grad H(y) - |lambda_p|^2 / 2,
/// with extended state Y = (y, lambda) in R^{4m}. Under the standard J of
/// size 4m this gives y' = dHhat/dlambda and lambda' = -dHhat/dy directly,
/// so no reordering is needed: y plays the role of coordinates, lambda of momenta.
/// The optimal control is u = -lambda_p (the last m costate components).
class ExtendedControlModel final : public HamiltonianModel {
 public:
  explicit ExtendedControlModel(ModelPtr base);

  int dim() const override { return 2 * base_->dim(); }
  std::string name() const override { return "extended(" + base_->name() + ")"; }
  double energy(const Vec& Y) const override;
  Vec gradient(const Vec& Y) const override;
  Mat hessian(const Vec& Y) const override;

  const HamiltonianModel& base() const { return *base_; }
  int control_dim() const { return base_->dim() / 2; }
  /// u = -lambda_{m+1..2m}.
  Vec control(const Vec& Y) const;

 private:
  ModelPtr base_;
};

/// Extension of a 6-dimensional (spatial CRTBP) base; 3 control components.
ModelPtr extended_model(ModelPtr base);
/// Extension of a 4-dimensional (planar Hill) base; 2 control components.
ModelPtr extended_hill_model(ModelPtr base);

/// L1, L2, L3 abscissae (barycentric) for mass ratio mu in (0, 1/2).
std::array<double, 3> collinear_libration_points(double mu);

/// Rotating-frame equilibrium state at a point (x, y, z): p = (-y, x, 0).
Vec equilibrium_state(double x, double y, int dim);

/// Hill problem L2 abscissa (1/3)^{1/3}.
double hill_l2_abscissa();

/// State matrix J * hess H(y_eq) of the variational equations. Throws
/// DomainError unless |grad H(y_eq)| < 1e-8.
Mat linearize(const HamiltonianModel& model, const Vec& y_eq);

double days_to_nondim(double days);
double nondim_to_days(double t);
double km_to_nondim(double km);
double nondim_to_km(double d);

// ---------------------------------------------------------------------------
// Small benchmark Hamiltonians used for method verification and the CLI `ivp` mode.

/// H = (q.q + p.p)/2 on R^{2m}.
ModelPtr harmonic_oscillator(int m = 1);
/// H = p^2/2 - cos q.
ModelPtr pendulum();
/// H = q^4/4 + p^2/2.
ModelPtr quartic_oscillator();
/// H = |p|^2/2 - 1/|q|, planar.
ModelPtr kepler();
/// H = y^T S y / 2 + g^T y, S symmetric.
ModelPtr quadratic_model(const Mat& S, const Vec& g);

/// Model by name: "crtbp", "crtbp-planar", "hill", "harmonic", "pendulum",
/// "quartic", "kepler". Throws DomainError on unknown names.
ModelPtr model_by_name(const std::string& name, double mu = kSunEarthMu);

}  // namespace hbvm
