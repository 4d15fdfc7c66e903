#include "hbvm/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hbvm {

Mat HamiltonianModel::hessian_derivative(const Vec& y, const Vec& dir) const {
  const double dnorm = dir.norm();
  if (dnorm == 0.0) return Mat::Zero(dim(), dim());
  const double step = 1e-6 * std::max(1.0, y.norm());
  const Vec unit = dir / dnorm;
  return (hessian(y + step * unit) - hessian(y - step * unit)) * (dnorm / (2.0 * step));
}

namespace {

// -c/|q - centre| and its derivatives in the position block of size m.
struct PointMass {
  Vec centre;
  double strength;

  double distance(const Vec& q) const { return (q - centre).norm(); }

  double potential(const Vec& q) const { return -strength / distance(q); }

  Vec gradient(const Vec& q) const {
    const Vec d = q - centre;
    const double r = d.norm();
    return strength * d / (r * r * r);
  }

  Mat hessian(const Vec& q) const {
    const Vec d = q - centre;
    const double r = d.norm();
    const double r3 = r * r * r;
    const Eigen::Index m = q.size();
    return strength * (Mat::Identity(m, m) / r3 - 3.0 * d * d.transpose() / (r3 * r * r));
  }

  Mat hessian_derivative(const Vec& q, const Vec& v) const {
    const Vec d = q - centre;
    const double r = d.norm();
    const double r2 = r * r;
    const double r5 = r2 * r2 * r;
    const double dv = d.dot(v);
    const Eigen::Index m = q.size();
    return strength * (-3.0 * dv / r5 * Mat::Identity(m, m) -
                       3.0 / r5 * (v * d.transpose() + d * v.transpose()) +
                       15.0 * dv / (r5 * r2) * d * d.transpose());
  }
};

// Shared rotating-frame structure: p1 q2 - p2 q1 + |p|^2/2 + V(q).
class RotatingFrameModel : public HamiltonianModel {
 public:
  explicit RotatingFrameModel(int m) : m_(m) {}
  int dim() const override { return 2 * m_; }

  double energy(const Vec& y) const override {
    const auto q = y.head(m_);
    const auto p = y.tail(m_);
    return p(0) * q(1) - p(1) * q(0) + 0.5 * p.squaredNorm() + potential(q);
  }

  Vec gradient(const Vec& y) const override {
    const Vec q = y.head(m_);
    const Vec p = y.tail(m_);
    Vec g(2 * m_);
    g.head(m_) = potential_gradient(q);
    g(0) -= p(1);
    g(1) += p(0);
    g.tail(m_) = p;
    g(m_) += q(1);
    g(m_ + 1) -= q(0);
    return g;
  }

  Mat hessian(const Vec& y) const override {
    const Vec q = y.head(m_);
    Mat hs = Mat::Zero(2 * m_, 2 * m_);
    hs.topLeftCorner(m_, m_) = potential_hessian(q);
    hs.bottomRightCorner(m_, m_).setIdentity();
    // d2/dq2 dp1 = 1, d2/dq1 dp2 = -1.
    hs(1, m_) = hs(m_, 1) = 1.0;
    hs(0, m_ + 1) = hs(m_ + 1, 0) = -1.0;
    return hs;
  }

  Mat hessian_derivative(const Vec& y, const Vec& dir) const override {
    Mat out = Mat::Zero(2 * m_, 2 * m_);
    out.topLeftCorner(m_, m_) = potential_hessian_derivative(y.head(m_), dir.head(m_));
    return out;
  }

 protected:
  virtual double potential(const Vec& q) const = 0;
  virtual Vec potential_gradient(const Vec& q) const = 0;
  virtual Mat potential_hessian(const Vec& q) const = 0;
  virtual Mat potential_hessian_derivative(const Vec& q, const Vec& v) const = 0;

  int m_;
};

class CrtbpModel final : public RotatingFrameModel {
 public:
  explicit CrtbpModel(const CrtbpParams& params)
      : RotatingFrameModel(params.spatial ? 3 : 2), params_(params) {
    if (!(params.mu > 0.0 && params.mu < 0.5)) {
      throw DomainError("crtbp_model: mu must lie in (0, 1/2)");
    }
    Vec sun = Vec::Zero(m_);
    Vec earth = Vec::Zero(m_);
    sun(0) = -params.mu;
    earth(0) = 1.0 - params.mu;
    primaries_[0] = PointMass{sun, 1.0 - params.mu};
    primaries_[1] = PointMass{earth, params.mu};
  }

  std::string name() const override { return params_.spatial ? "crtbp" : "crtbp-planar"; }

 protected:
  void guard(const Vec& q) const {
    for (const auto& body : primaries_) {
      if (!(body.distance(q) >= kSingularityGuard)) {
        throw DomainError("crtbp_model: state too close to a primary");
      }
    }
  }
  double potential(const Vec& q) const override {
    guard(q);
    return primaries_[0].potential(q) + primaries_[1].potential(q);
  }
  Vec potential_gradient(const Vec& q) const override {
    guard(q);
    return primaries_[0].gradient(q) + primaries_[1].gradient(q);
  }
  Mat potential_hessian(const Vec& q) const override {
    guard(q);
    return primaries_[0].hessian(q) + primaries_[1].hessian(q);
  }
  Mat potential_hessian_derivative(const Vec& q, const Vec& v) const override {
    guard(q);
    return primaries_[0].hessian_derivative(q, v) + primaries_[1].hessian_derivative(q, v);
  }

 private:
  CrtbpParams params_;
  std::array<PointMass, 2> primaries_;
};

class HillModel final : public RotatingFrameModel {
 public:
  HillModel() : RotatingFrameModel(2), earth_{Vec::Zero(2), 1.0} {}
  std::string name() const override { return "hill"; }

 protected:
  void guard(const Vec& q) const {
    if (!(q.norm() >= kSingularityGuard)) throw DomainError("hill_model: state too close to the origin");
  }
  double potential(const Vec& q) const override {
    guard(q);
    return earth_.potential(q) + 0.5 * q(1) * q(1) - q(0) * q(0);
  }
  Vec potential_gradient(const Vec& q) const override {
    guard(q);
    Vec g = earth_.gradient(q);
    g(0) -= 2.0 * q(0);
    g(1) += q(1);
    return g;
  }
  Mat potential_hessian(const Vec& q) const override {
    guard(q);
    Mat hs = earth_.hessian(q);
    hs(0, 0) -= 2.0;
    hs(1, 1) += 1.0;
    return hs;
  }
  Mat potential_hessian_derivative(const Vec& q, const Vec& v) const override {
    guard(q);
    return earth_.hessian_derivative(q, v);
  }

 private:
  PointMass earth_;
};

class QuadraticModel final : public HamiltonianModel {
 public:
  QuadraticModel(Mat S, Vec g, std::string name) : S_(std::move(S)), g_(std::move(g)), name_(std::move(name)) {
    if (S_.rows() != S_.cols() || S_.rows() % 2 != 0 || g_.size() != S_.rows()) {
      throw DomainError("quadratic_model: need a square even-sized S and matching g");
    }
  }
  int dim() const override { return static_cast<int>(S_.rows()); }
  std::string name() const override { return name_; }
  double energy(const Vec& y) const override { return 0.5 * y.dot(S_ * y) + g_.dot(y); }
  Vec gradient(const Vec& y) const override { return S_ * y + g_; }
  Mat hessian(const Vec&) const override { return S_; }
  Mat hessian_derivative(const Vec&, const Vec&) const override { return Mat::Zero(dim(), dim()); }

 private:
  Mat S_;
  Vec g_;
  std::string name_;
};

class PendulumModel final : public HamiltonianModel {
 public:
  int dim() const override { return 2; }
  std::string name() const override { return "pendulum"; }
  double energy(const Vec& y) const override { return 0.5 * y(1) * y(1) - std::cos(y(0)); }
  Vec gradient(const Vec& y) const override { return Vec{{std::sin(y(0)), y(1)}}; }
  Mat hessian(const Vec& y) const override {
    Mat hs = Mat::Zero(2, 2);
    hs(0, 0) = std::cos(y(0));
    hs(1, 1) = 1.0;
    return hs;
  }
};

class QuarticModel final : public HamiltonianModel {
 public:
  int dim() const override { return 2; }
  std::string name() const override { return "quartic"; }
  double energy(const Vec& y) const override { return 0.25 * std::pow(y(0), 4) + 0.5 * y(1) * y(1); }
  Vec gradient(const Vec& y) const override { return Vec{{y(0) * y(0) * y(0), y(1)}}; }
  Mat hessian(const Vec& y) const override {
    Mat hs = Mat::Zero(2, 2);
    hs(0, 0) = 3.0 * y(0) * y(0);
    hs(1, 1) = 1.0;
    return hs;
  }
};

class KeplerModel final : public HamiltonianModel {
 public:
  int dim() const override { return 4; }
  std::string name() const override { return "kepler"; }
  double energy(const Vec& y) const override { return 0.5 * y.tail(2).squaredNorm() + sun_.potential(position(y)); }
  Vec gradient(const Vec& y) const override {
    Vec g(4);
    g.head(2) = sun_.gradient(position(y));
    g.tail(2) = y.tail(2);
    return g;
  }
  Mat hessian(const Vec& y) const override {
    Mat hs = Mat::Zero(4, 4);
    hs.topLeftCorner(2, 2) = sun_.hessian(position(y));
    hs.bottomRightCorner(2, 2).setIdentity();
    return hs;
  }

 private:
  static Vec position(const Vec& y) {
    Vec q = y.head(2);
    if (!(q.norm() >= kSingularityGuard)) throw DomainError("kepler: state at the origin");
    return q;
  }
  PointMass sun_{Vec::Zero(2), 1.0};
};

}  // namespace

// ---------------------------------------------------------------------------

ExtendedControlModel::ExtendedControlModel(ModelPtr base) : base_(std::move(base)) {
  if (!base_) throw DomainError("extended model: null base");
}

double ExtendedControlModel::energy(const Vec& Y) const {
  const int n = base_->dim();
  const Vec y = Y.head(n);
  const Vec lambda = Y.tail(n);
  return lambda.dot(base_->vector_field(y)) - 0.5 * lambda.tail(n / 2).squaredNorm();
}

Vec ExtendedControlModel::gradient(const Vec& Y) const {
  const int n = base_->dim();
  const Vec y = Y.head(n);
  const Vec lambda = Y.tail(n);
  Vec g(2 * n);
  // d/dy (lambda^T J grad H) = hess H * J^T lambda = -hess H * J lambda.
  g.head(n) = -(base_->hessian(y) * apply_j(lambda));
  g.tail(n) = base_->vector_field(y);
  g.tail(n / 2) -= lambda.tail(n / 2);
  return g;
}

Mat ExtendedControlModel::hessian(const Vec& Y) const {
  const int n = base_->dim();
  const Vec y = Y.head(n);
  const Vec lambda = Y.tail(n);
  const Mat hs = base_->hessian(y);
  const Mat jh = apply_j(hs);  // J * hess H
  Mat out = Mat::Zero(2 * n, 2 * n);
  out.topLeftCorner(n, n) = base_->hessian_derivative(y, -apply_j(lambda));
  out.bottomLeftCorner(n, n) = jh;
  out.topRightCorner(n, n) = jh.transpose();
  out.bottomRightCorner(n / 2, n / 2) = -Mat::Identity(n / 2, n / 2);
  return out;
}

Vec ExtendedControlModel::control(const Vec& Y) const {
  const int n = base_->dim();
  return -Y.tail(n / 2);
}

// ---------------------------------------------------------------------------

ModelPtr crtbp_model(const CrtbpParams& params) { return std::make_shared<CrtbpModel>(params); }

ModelPtr hill_model() { return std::make_shared<HillModel>(); }

ModelPtr extended_model(ModelPtr base) {
  if (!base || base->dim() != 6) throw DomainError("extended_model: base must be 6-dimensional");
  return std::make_shared<ExtendedControlModel>(std::move(base));
}

ModelPtr extended_hill_model(ModelPtr base) {
  if (!base || base->dim() != 4) throw DomainError("extended_hill_model: base must be 4-dimensional");
  return std::make_shared<ExtendedControlModel>(std::move(base));
}

namespace {

double collinear_residual(double x, double mu) {
  const double d1 = x + mu;
  const double d2 = x - 1.0 + mu;
  return x - (1.0 - mu) * d1 / std::pow(std::abs(d1), 3) - mu * d2 / std::pow(std::abs(d2), 3);
}

double collinear_slope(double x, double mu) {
  return 1.0 + 2.0 * (1.0 - mu) / std::pow(std::abs(x + mu), 3) +
         2.0 * mu / std::pow(std::abs(x - 1.0 + mu), 3);
}

// The residual is increasing on each bracket, so Newton safeguarded by
// bisection converges to the unique root.
double collinear_root(double lo, double hi, double mu) {
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double f = collinear_residual(x, mu);
    if (std::abs(f) < 1e-14) return x;
    if (f > 0.0) hi = x; else lo = x;
    double next = x - f / collinear_slope(x, mu);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(x)) return next;
    x = next;
  }
  return x;
}

}  // namespace

std::array<double, 3> collinear_libration_points(double mu) {
  if (!(mu > 0.0 && mu < 0.5)) throw DomainError("collinear_libration_points: mu must lie in (0, 1/2)");
  const double hill_radius = std::cbrt(mu / 3.0);
  const double gap = 1e-3 * hill_radius;
  const double l1 = collinear_root(-mu + 1e-3, 1.0 - mu - gap, mu);
  const double l2 = collinear_root(1.0 - mu + gap, 2.0, mu);
  const double l3 = collinear_root(-2.0, -mu - 1e-3, mu);
  return {l1, l2, l3};
}

Vec equilibrium_state(double x, double y, int dim) {
  if (dim != 4 && dim != 6) throw DomainError("equilibrium_state: dim must be 4 or 6");
  Vec state = Vec::Zero(dim);
  const int m = dim / 2;
  state(0) = x;
  state(1) = y;
  state(m) = -y;
  state(m + 1) = x;
  return state;
}

double hill_l2_abscissa() { return std::cbrt(1.0 / 3.0); }

Mat linearize(const HamiltonianModel& model, const Vec& y_eq) {
  const double gnorm = model.gradient(y_eq).norm();
  if (!(gnorm < 1e-8)) {
    throw DomainError("linearize: point is not an equilibrium (|grad H| = " + std::to_string(gnorm) + ")");
  }
  return apply_j(model.hessian(y_eq));
}

double days_to_nondim(double days) {
  return days * PhysicalConstants::seconds_per_day * PhysicalConstants::omega_rad_s;
}
double nondim_to_days(double t) {
  return t / (PhysicalConstants::seconds_per_day * PhysicalConstants::omega_rad_s);
}
double km_to_nondim(double km) { return km / PhysicalConstants::R_km; }
double nondim_to_km(double d) { return d * PhysicalConstants::R_km; }

ModelPtr harmonic_oscillator(int m) {
  return std::make_shared<QuadraticModel>(Mat::Identity(2 * m, 2 * m), Vec::Zero(2 * m), "harmonic");
}
ModelPtr pendulum() { return std::make_shared<PendulumModel>(); }
ModelPtr quartic_oscillator() { return std::make_shared<QuarticModel>(); }
ModelPtr kepler() { return std::make_shared<KeplerModel>(); }
ModelPtr quadratic_model(const Mat& S, const Vec& g) {
  return std::make_shared<QuadraticModel>(S, g, "quadratic");
}

ModelPtr model_by_name(const std::string& name, double mu) {
  if (name == "crtbp") return crtbp_model({mu, true});
  if (name == "crtbp-planar") return crtbp_model({mu, false});
  if (name == "hill") return hill_model();
  if (name == "harmonic") return harmonic_oscillator(1);
  if (name == "pendulum") return pendulum();
  if (name == "quartic") return quartic_oscillator();
  if (name == "kepler") return kepler();
  throw DomainError("unknown model '" + name + "'");
}

}  // namespace hbvm
