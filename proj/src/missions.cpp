#include "hbvm/missions.hpp"

#include "hbvm/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace hbvm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using CVec = Eigen::VectorXcd;

struct CenterMode {
  double omega = 0.0;
  CVec v;
};

// Imaginary eigenvalue pairs of the linearization, split by whether the
// eigenvector lives in the (q3, p3) block.
std::pair<std::optional<CenterMode>, std::optional<CenterMode>> center_modes(const HamiltonianModel& model,
                                                                            const Vec& eq) {
  const Mat A = linearize(model, eq);
  Eigen::EigenSolver<Mat> es(A);
  const int d = model.dim(), m = d / 2;
  std::optional<CenterMode> in_plane, out_of_plane;
  for (int i = 0; i < d; ++i) {
    const std::complex<double> lam = es.eigenvalues()[i];
    if (lam.imag() <= 0.0 || std::abs(lam.real()) > 1e-8 * std::abs(lam)) continue;
    CenterMode mode{lam.imag(), es.eigenvectors().col(i)};
    double vertical = 0.0;
    if (m == 3) vertical = std::norm(mode.v[2]) + std::norm(mode.v[5]);
    if (vertical > 0.5 * mode.v.squaredNorm()) {
      out_of_plane = mode;
    } else {
      in_plane = mode;
    }
  }
  return {in_plane, out_of_plane};
}

std::vector<Vec> orbit_nodes(const std::function<Vec(double)>& curve, int n) {
  std::vector<Vec> nodes;
  for (int i = 0; i <= n; ++i) nodes.push_back(curve(i == n ? 0.0 : double(i) / n));
  return nodes;
}

double max_relative_drift(const HamiltonianModel& model, const std::vector<Vec>& y) {
  const double h0 = model.energy(y.front());
  double worst = 0.0;
  for (const Vec& v : y) worst = std::max(worst, std::abs(model.energy(v) - h0));
  return h0 == 0.0 ? worst : worst / std::abs(h0);
}

// Guess with setup.n intervals and setup.s stage columns; h left untouched.
MeshSolution prepare_guess(const MeshSolution& guess, const StagePartition& part, int n) {
  if (guess.n() == n && !guess.Z.empty() && guess.Z.front().cols() == part.s) return guess;
  if (!guess.Z.empty() && guess.Z.front().cols() == part.s) return resample_periodic(guess, n, part, part);
  // No usable stages: piecewise-linear resampling of the nodes.
  std::vector<Vec> nodes;
  for (int j = 0; j <= n; ++j) {
    const double x = double(j) / n * guess.n();
    const int i = std::min(int(x), guess.n() - 1);
    const double c = x - i;
    nodes.push_back((1.0 - c) * guess.y[i] + c * guess.y[i + 1]);
  }
  nodes.back() = nodes.front();
  return mesh_from_nodes(nodes, guess.t0, guess.h * guess.n() / n, part);
}

// Default phase condition q2(0) = 0: every guess starts on the x-z plane.
PeriodicAnchored anchored(const MissionSetup& setup, int dim, int comp, double value) {
  if (setup.anchor_rows && setup.anchor_values) return {*setup.anchor_rows, *setup.anchor_values};
  Mat Ba = Mat::Zero(1, dim);
  Ba(0, comp) = 1.0;
  return {Ba, Vec::Constant(1, value)};
}

OrbitResult finish_orbit(const HamiltonianModel& model, MeshSolution mesh, bool spatial, double mu) {
  OrbitResult r;
  r.period_days = nondim_to_days(mesh.period());
  r.energy = model.energy(mesh.y.front());
  r.max_energy_drift = max_relative_drift(model, mesh.y);
  double xmin = 1e300, zmax = -1e300, zmin = 1e300;
  for (const Vec& y : mesh.y) {
    xmin = std::min(xmin, y[0]);
    if (spatial) {
      zmax = std::max(zmax, y[2]);
      zmin = std::min(zmin, y[2]);
    }
  }
  if (xmin < collinear_libration_points(mu)[0]) {
    r.classification = "L1-L2 embracing";
  } else if (!spatial || std::max(zmax, -zmin) < 1e-8) {
    r.classification = "L2 Lyapunov";
  } else {
    r.classification = zmax >= -zmin ? "L2 halo (northern)" : "L2 halo (southern)";
  }
  r.mesh = std::move(mesh);
  return r;
}

OrbitResult solve_orbit(const MissionSetup& setup, bool spatial, const MeshSolution& guess,
                        std::optional<double> T_days, std::optional<double> H_target) {
  if (setup.n < 2 || setup.s < 1 || setup.k < setup.s) throw DomainError("orbit: need k >= s >= 1 and n >= 2");
  const ModelPtr model = crtbp_model({setup.mu, spatial});
  if (guess.y.empty() || guess.y.front().size() != model->dim()) {
    throw DomainError("orbit: guess dimension does not match the model");
  }
  const StagePartition part = make_partition(setup.k, setup.s);
  MeshSolution mesh = prepare_guess(guess, part, setup.n);
  mesh.y.back() = mesh.y.front();
  const PeriodicAnchored anchor = anchored(setup, model->dim(), 1, 0.0);
  BoundarySpec spec;
  if (T_days) {
    if (!(*T_days > 0.0)) throw DomainError("orbit: period must be positive");
    mesh.h = days_to_nondim(*T_days) / setup.n;
    spec = anchor;
  } else {
    spec = PeriodicEnergy{anchor.Ba, anchor.b0, *H_target};
  }
  return finish_orbit(*model, newton_solve(*model, part, spec, mesh, setup.newton), spatial, setup.mu);
}

TransferResult finish_transfer(const ExtendedControlModel& model, const StagePartition& part, MeshSolution mesh,
                               const Vec& P1, const Vec& P2) {
  TransferResult r;
  const int d = model.base().dim();
  for (const Vec& y : mesh.y) r.control.push_back(model.control(y));
  const QuadratureRule rule = gauss_legendre_rule(part.k);
  double J = 0.0;
  for (int i = 0; i < mesh.n(); ++i) {
    const Mat W = mesh.y[i] * part.a0.transpose() + mesh.Z[i] * part.A_map.transpose();
    double sum = 0.0;
    for (int l = 0; l < part.s; ++l) {
      sum += rule.weights[part.fundamental_idx[l]] * model.control(mesh.Z[i].col(l)).squaredNorm();
    }
    for (int j = 0; j < part.k - part.s; ++j) {
      sum += rule.weights[part.silent_idx[j]] * model.control(W.col(j)).squaredNorm();
    }
    J += 0.5 * mesh.h * sum;
  }
  r.cost = J;
  r.initial_mismatch = (mesh.y.front().head(d) - P1).lpNorm<Eigen::Infinity>();
  r.final_mismatch = (mesh.y.back().head(d) - P2).lpNorm<Eigen::Infinity>();
  r.hamiltonian_error = model.energy(mesh.y.back()) - model.energy(mesh.y.front());
  r.max_relative_drift = max_relative_drift(model, mesh.y);
  r.mesh = std::move(mesh);
  return r;
}

std::vector<int> first_indices(int d) {
  std::vector<int> idx(d);
  for (int i = 0; i < d; ++i) idx[i] = i;
  return idx;
}

TransferResult solve_transfer(const ModelPtr& base, const Vec& P1, const Vec& P2, double T,
                              const MissionSetup& setup, MeshSolution mesh) {
  const auto model = std::make_shared<ExtendedControlModel>(base);
  const StagePartition part = make_partition(setup.k, setup.s);
  const int d = base->dim();
  if (P1.size() != d || P2.size() != d) throw DomainError("transfer: endpoint dimension does not match the model");
  if (!(T > 0.0)) throw DomainError("transfer: transfer time must be positive");
  mesh.h = T / mesh.n();
  const Separated spec = fix_components(first_indices(d), P1, first_indices(d), P2);
  return finish_transfer(*model, part, newton_solve(*model, part, spec, mesh, setup.newton), P1, P2);
}

}  // namespace

std::pair<double, double> center_frequencies(const HamiltonianModel& model, const Vec& equilibrium) {
  const auto [ip, op] = center_modes(model, equilibrium);
  if (!ip && !op) throw DomainError("center_frequencies: no center eigenvalue pair");
  return {ip ? ip->omega : 0.0, op ? op->omega : 0.0};
}

MeshSolution initial_guess_linearized(const HamiltonianModel& model, const Vec& equilibrium, const GuessShape& shape,
                                      int n, GuessPlane plane, const StagePartition& part) {
  if (n < 2) throw DomainError("initial_guess_linearized: n must be at least 2");
  if (!(shape.amplitude > 0.0)) throw DomainError("initial_guess_linearized: amplitude must be positive");
  const auto [ip, op] = center_modes(model, equilibrium);
  const int m = model.dim() / 2;

  if (plane == GuessPlane::InPlane) {
    if (!ip) throw DomainError("initial_guess_linearized: no in-plane center eigenvalue pair");
    const double T = shape.period > 0.0 ? shape.period : kTwoPi / ip->omega;
    // Phase such that q2 = 0 and q1 - x_eq > 0 at t = 0.
    CVec v = ip->v * std::polar(1.0, std::numbers::pi / 2 - std::arg(ip->v[1]));
    if (v[0].real() < 0.0) v = -v;
    auto displacement = [&, v](double phase) -> Vec {
      return (v * std::polar(1.0, kTwoPi * phase)).real();
    };
    double radius = 0.0;
    for (int j = 0; j < 720; ++j) radius = std::max(radius, displacement(j / 720.0).head(2).norm());
    const double scale = shape.amplitude / radius;
    const auto nodes = orbit_nodes([&](double phase) -> Vec { return equilibrium + scale * displacement(phase); }, n);
    return mesh_from_nodes(nodes, 0.0, T / n, part);
  }

  if (m != 3) throw DomainError("initial_guess_linearized: out-of-plane guess needs the spatial model");
  if (!op) throw DomainError("initial_guess_linearized: no out-of-plane center eigenvalue pair");
  const double T = shape.period > 0.0 ? shape.period : kTwoPi / op->omega;
  const double w = kTwoPi / T;
  const double big = shape.amplitude, small = shape.amplitude * std::min(shape.aspect, 1.0 / shape.aspect);
  const double ay = shape.aspect >= 1.0 ? big : small, az = shape.aspect >= 1.0 ? small : big;
  auto curve = [&](double phase) -> Vec {
    const double th = kTwoPi * phase;
    Vec y = equilibrium;
    y[1] += ay * std::sin(th);
    y[2] += az * std::cos(th);
    const Vec qdot = (Vec(3) << 0.0, ay * w * std::cos(th), -az * w * std::sin(th)).finished();
    y[3] = qdot[0] - y[1];
    y[4] = qdot[1] + y[0];
    y[5] = qdot[2];
    return y;
  };
  return mesh_from_nodes(orbit_nodes(curve, n), 0.0, T / n, part);
}

Vec l2_state(double mu, bool spatial) {
  return equilibrium_state(collinear_libration_points(mu)[1], 0.0, spatial ? 6 : 4);
}

MeshSolution lyapunov_guess(const MissionSetup& setup, double amplitude) {
  const ModelPtr model = crtbp_model({setup.mu, false});
  return initial_guess_linearized(*model, l2_state(setup.mu, false), {amplitude, 1.0, 0.0}, setup.n,
                                  GuessPlane::InPlane, make_partition(setup.k, setup.s));
}

MeshSolution halo_guess(const MissionSetup& setup, const GuessShape& shape) {
  const ModelPtr model = crtbp_model({setup.mu, true});
  return initial_guess_linearized(*model, l2_state(setup.mu, true), shape, setup.n, GuessPlane::OutOfPlane,
                                  make_partition(setup.k, setup.s));
}

OrbitResult lyapunov_by_period(const MissionSetup& setup, double T_days, const MeshSolution& guess) {
  return solve_orbit(setup, false, guess, T_days, std::nullopt);
}

OrbitResult lyapunov_by_energy(const MissionSetup& setup, double H_target, const MeshSolution& guess) {
  return solve_orbit(setup, false, guess, std::nullopt, H_target);
}

OrbitResult halo_by_period(const MissionSetup& setup, double T_days, const MeshSolution& guess) {
  return solve_orbit(setup, true, guess, T_days, std::nullopt);
}

OrbitResult halo_by_energy(const MissionSetup& setup, double H_target, const MeshSolution& guess) {
  return solve_orbit(setup, true, guess, std::nullopt, H_target);
}

MeshSolution resample_periodic(const MeshSolution& mesh, int n, const StagePartition& from,
                               const StagePartition& to) {
  if (n < 1 || mesh.n() < 1) throw DomainError("resample_periodic: empty mesh");
  const int n0 = mesh.n();
  auto at = [&](double phase) -> Vec {
    phase -= std::floor(phase);
    const double x = phase * n0;
    const int i = std::min(int(x), n0 - 1);
    return dense_output(from, mesh.y[i], mesh.Z[i], mesh.h, x - i);
  };
  MeshSolution out;
  out.t0 = mesh.t0;
  out.h = mesh.h * n0 / n;
  for (int j = 0; j < n; ++j) out.y.push_back(at(double(j) / n));
  out.y.push_back(out.y.front());
  for (int j = 0; j < n; ++j) {
    Mat z(mesh.y.front().size(), to.s);
    for (int l = 0; l < to.s; ++l) z.col(l) = at((j + to.c_fundamental[l]) / n);
    out.Z.push_back(z);
  }
  return out;
}

TransferResult hill_transfer(const Vec& P1, const Vec& P2, double tf, const MissionSetup& setup,
                             const MeshSolution* warm) {
  const ModelPtr base = hill_model();
  const int d = base->dim();
  MeshSolution mesh;
  if (warm) {
    if (warm->n() != setup.n) throw DomainError("hill_transfer: warm start must have n intervals");
    mesh = *warm;
  } else {
    if (P1.size() != d || P2.size() != d) throw DomainError("hill_transfer: endpoints must be planar states");
    std::vector<Vec> nodes;
    for (int i = 0; i <= setup.n; ++i) {
      const double sgm = double(i) / setup.n;
      Vec y = Vec::Zero(2 * d);
      y.head(d) = (1.0 - sgm) * P1 + sgm * P2;
      nodes.push_back(y);
    }
    mesh = mesh_from_nodes(nodes, 0.0, tf / setup.n, make_partition(setup.k, setup.s));
  }
  return solve_transfer(base, P1, P2, tf, setup, std::move(mesh));
}

int topmost_node(const MeshSolution& orbit) {
  if (orbit.y.empty() || orbit.y.front().size() < 6) throw DomainError("topmost_node: spatial orbit required");
  int best = 0;
  for (int i = 1; i < orbit.n(); ++i) {
    if (orbit.y[i][2] > orbit.y[best][2]) best = i;
  }
  return best;
}

TransferResult halo_transfer(const OrbitResult& A, const OrbitResult& B, double T_days, const MissionSetup& setup) {
  const ModelPtr base = crtbp_model({setup.mu, true});
  const int ia = topmost_node(A.mesh), ib = topmost_node(B.mesh);
  const int na = A.mesh.n(), nb = B.mesh.n(), n = setup.n;
  const Vec P1 = A.mesh.y[ia], P2 = B.mesh.y[ib];
  std::vector<Vec> nodes;
  for (int i = 0; i <= n; ++i) {
    const double sgm = double(i) / n;
    const Vec& a = A.mesh.y[(ia + int(std::lround(sgm * na))) % na];
    const Vec& b = B.mesh.y[(ib + int(std::lround(sgm * nb))) % nb];
    Vec y = Vec::Zero(12);
    y.head(6) = (1.0 - sgm) * a + sgm * b;
    nodes.push_back(y);
  }
  nodes.front().head(6) = P1;
  nodes.back().head(6) = P2;
  const MeshSolution mesh = mesh_from_nodes(nodes, 0.0, 1.0, make_partition(setup.k, setup.s));
  return solve_transfer(base, P1, P2, days_to_nondim(T_days), setup, mesh);
}

double winding_number(const std::vector<Vec>& y, double cx, double cy, double min_radius) {
  double total = 0.0;
  std::optional<double> prev;
  for (const Vec& v : y) {
    const double dx = v[0] - cx, dy = v[1] - cy;
    if (std::hypot(dx, dy) < min_radius) continue;
    const double a = std::atan2(dy, dx);
    if (prev) total += std::remainder(a - *prev, kTwoPi);
    prev = a;
  }
  return total / kTwoPi;
}

}  // namespace hbvm
