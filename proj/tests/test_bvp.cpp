#include "hbvm/bvp_newton.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <random>

using namespace hbvm;

namespace {

// Discrete HBVM trajectory with its stages: an exact zero of the residual map.
MeshSolution discrete_solution(const HamiltonianModel& model, const StagePartition& part, const Vec& y0, double h,
                               int n) {
  MeshSolution mesh;
  mesh.h = h;
  mesh.y.push_back(y0);
  for (int i = 0; i < n; ++i) {
    const StepResult r = hbvm_step(model, mesh.y.back(), h, part);
    mesh.Z.push_back(r.Z);
    mesh.y.push_back(r.y1);
  }
  return mesh;
}

MeshSolution perturbed(MeshSolution mesh, std::mt19937& rng, double size) {
  std::uniform_real_distribution<double> u(-size, size);
  for (auto& y : mesh.y) {
    for (auto& v : y) v += u(rng);
  }
  for (auto& z : mesh.Z) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z.data()[j] += u(rng);
  }
  return mesh;
}

// Central-difference Jacobian of the global residual over the packed unknowns.
Mat fd_global_jacobian(const HamiltonianModel& model, const StagePartition& part, const BoundarySpec& spec,
                       const MeshSolution& mesh) {
  const Eigen::Index nx = pack_unknowns(spec, mesh).size();
  return testing::fd_jacobian(
      [&](const Vec& x) { return global_residual(model, part, spec, apply_update(spec, mesh, x)); }, Vec::Zero(nx));
}

NonSeparated sum_condition(const Vec& c) {
  NonSeparated ns;
  ns.g = [c](const Vec& a, const Vec& b) { return Vec(a + b - c); };
  ns.g_y0 = [](const Vec& a, const Vec&) { return Mat(Mat::Identity(a.size(), a.size())); };
  ns.g_yn = [](const Vec&, const Vec& b) { return Mat(Mat::Identity(b.size(), b.size())); };
  return ns;
}

// Closed pendulum guess: ellipse of amplitude a sampled with period T.
MeshSolution pendulum_guess(double a, double T, int n, const StagePartition& part) {
  std::vector<Vec> nodes;
  const double w = 2.0 * M_PI / T;
  for (int i = 0; i <= n; ++i) {
    const double t = i * T / n;
    nodes.push_back(Vec{{a * std::cos(w * t), -a * w * std::sin(w * t)}});
  }
  nodes.back() = nodes.front();
  return mesh_from_nodes(nodes, 0.0, T / n, part);
}

}  // namespace

TEST_CASE("assemble_interval_blocks at h = 0") {
  const ModelPtr model = crtbp_model({0.01, false});
  const StagePartition part = make_partition(6, 2);
  const Vec y = equilibrium_state(0.5, 0.1, 4);
  const IntervalBlocks b = assemble_interval_blocks(*model, part, y, y, 0.0);
  Mat e_i(8, 4);
  e_i << Mat::Identity(4, 4), Mat::Identity(4, 4);
  CHECK((b.V + e_i).norm() == 0.0);
  CHECK((b.L + Mat::Identity(4, 4)).norm() == 0.0);
  CHECK((b.K - Mat::Identity(8, 8)).norm() == 0.0);
  CHECK(b.UT.norm() == 0.0);
}

TEST_CASE("assemble_interval_blocks with k = s has no silent contributions") {
  const ModelPtr model = pendulum();
  const StagePartition part = make_partition(3, 3);
  const IntervalBlocks b = assemble_interval_blocks(*model, part, Vec{{0.4, 0.1}}, Vec{{0.5, -0.2}}, 0.3);
  CHECK((b.V + Mat::Identity(2, 2).replicate(3, 1)).norm() == 0.0);
  CHECK((b.L + Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("midpoint blocks are the exact Jacobian for a quadratic Hamiltonian") {
  std::mt19937 rng(3);
  Mat S = Mat::Random(4, 4);
  S = (S + S.transpose()).eval();
  const ModelPtr model = quadratic_model(S, Vec{{0.1, -0.2, 0.3, 0.05}});
  const StagePartition part = make_partition(4, 2);
  const MeshSolution mesh = perturbed(mesh_from_nodes({Vec::Zero(4), Vec::Ones(4) * 0.1, Vec::Ones(4) * 0.2,
                                                       Vec::Ones(4) * 0.25, Vec::Ones(4) * 0.2},
                                                      0.0, 0.1, part),
                                      rng, 0.05);
  const std::vector<BoundarySpec> specs = {
      fix_components({0, 1}, Vec{{0.0, 0.1}}, {2, 3}, Vec{{0.2, 0.3}}),
      sum_condition(Vec::Constant(4, 0.1)),
      PeriodicAnchored{Mat::Identity(4, 4).topRows(1), Vec::Zero(1)},
      PeriodicEnergy{Mat::Identity(4, 4).middleRows(1, 2), Vec::Zero(2), 0.01},
  };
  for (size_t k = 0; k < specs.size(); ++k) {
    CAPTURE(k);
    const Mat A = assemble_dense(newton_system(*model, part, specs[k], mesh)).A;
    const Mat fd = fd_global_jacobian(*model, part, specs[k], mesh);
    REQUIRE(A.rows() == fd.rows());
    REQUIRE(A.cols() == fd.cols());
    CHECK(testing::rel_err(A, fd, 1.0) < 1e-9);
    // Newton rhs is the negated residual.
    CHECK((newton_system(*model, part, specs[k], mesh).rhs() + global_residual(*model, part, specs[k], mesh)).norm() ==
          0.0);
  }
}

TEST_CASE("exact-mode Jacobian matches finite differences on nonlinear models") {
  std::mt19937 rng(5);
  const ModelPtr model = crtbp_model({0.01, false});
  const StagePartition part = make_partition(6, 2);
  const MeshSolution base = discrete_solution(*model, part, Vec{{0.8, 0.0, 0.0, 0.9}}, 0.05, 6);
  const MeshSolution mesh = perturbed(base, rng, 1e-3);
  const std::vector<BoundarySpec> specs = {
      fix_components({0, 1}, Vec{{0.8, 0.0}}, {2, 3}, Vec{{0.0, 0.9}}),
      sum_condition(Vec::Constant(4, 0.1)),
      PeriodicAnchored{Mat::Identity(4, 4).topRows(1), Vec::Zero(1)},
      PeriodicEnergy{Mat::Identity(4, 4).middleRows(1, 1), Vec::Zero(1), -1.5},
  };
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (size_t k = 0; k < specs.size(); ++k) {
    CAPTURE(k);
    const Mat A = assemble_dense(newton_system(*model, part, specs[k], mesh, JacobianMode::Exact)).A;
    Vec dir(A.cols());
    for (auto& v : dir) v = u(rng);
    const double eps = 1e-6;
    const Vec fd = (global_residual(*model, part, specs[k], apply_update(specs[k], mesh, dir, eps)) -
                    global_residual(*model, part, specs[k], apply_update(specs[k], mesh, dir, -eps))) /
                   (2 * eps);
    CHECK(testing::rel_err(A * dir, fd) < 1e-5);
  }
}

TEST_CASE("residuals") {
  const StagePartition part = make_partition(6, 2);
  SUBCASE("discrete solution is a fixed point") {
    const ModelPtr model = pendulum();
    const MeshSolution mesh = discrete_solution(*model, part, Vec{{1.2, 0.0}}, 0.1, 20);
    for (const IntervalRhs& r : residuals(*model, part, mesh.y, mesh.Z, mesh.h)) {
      CHECK(r.stage.lpNorm<Eigen::Infinity>() < 1e-13);
      CHECK(r.step.lpNorm<Eigen::Infinity>() < 1e-13);
    }
  }
  SUBCASE("constant Hamiltonian") {
    const ModelPtr zero = quadratic_model(Mat::Zero(2, 2), Vec::Zero(2));
    const std::vector<Vec> y = {Vec{{0.1, 0.2}}, Vec{{0.4, -0.3}}};
    Mat z(2, 2);
    z << 1.0, 2.0, 3.0, 4.0;
    const auto r = residuals(*zero, part, y, {z}, 0.5);
    const Mat expected_stage = -(z - y[0].replicate(1, 2));
    CHECK((r[0].stage - Eigen::Map<const Vec>(expected_stage.data(), 4)).norm() == 0.0);
    CHECK((r[0].step + (y[1] - y[0])).norm() == 0.0);
  }
}

TEST_CASE("h_border_columns") {
  const StagePartition part = make_partition(6, 2);
  SUBCASE("zero vector field") {
    const ModelPtr zero = quadratic_model(Mat::Zero(4, 4), Vec::Zero(4));
    const MeshSolution mesh = mesh_from_nodes({Vec::Ones(4), Vec::Zero(4), Vec::Ones(4)}, 0.0, 0.3, part);
    for (const BorderColumns& c : h_border_columns(*zero, part, mesh.y, mesh.Z, mesh.h)) {
      CHECK(c.w.norm() == 0.0);
      CHECK(c.v.norm() == 0.0);
    }
  }
  SUBCASE("linear Hamiltonian gives v = -J g") {
    const Vec g{{0.3, -1.1}};
    const ModelPtr lin = quadratic_model(Mat::Zero(2, 2), g);
    const MeshSolution mesh = mesh_from_nodes({Vec{{0.2, 0.1}}, Vec{{0.7, 0.4}}}, 0.0, 0.2, part);
    const auto cols = h_border_columns(*lin, part, mesh.y, mesh.Z, mesh.h);
    CHECK((cols[0].v + apply_j(g)).norm() < 1e-15);
  }
  SUBCASE("finite-difference check") {
    const ModelPtr model = kepler();
    const MeshSolution mesh = discrete_solution(*model, part, testing::kepler_pericentre(0.3), 0.1, 5);
    const auto cols = h_border_columns(*model, part, mesh.y, mesh.Z, mesh.h);
    const double dh = 1e-6;
    const auto plus = residuals(*model, part, mesh.y, mesh.Z, mesh.h + dh);
    const auto minus = residuals(*model, part, mesh.y, mesh.Z, mesh.h - dh);
    for (size_t i = 0; i < cols.size(); ++i) {
      // residuals() returns negated residuals.
      CHECK(testing::rel_err(cols[i].w, -(plus[i].stage - minus[i].stage) / (2 * dh)) < 1e-6);
      CHECK(testing::rel_err(cols[i].v, -(plus[i].step - minus[i].step) / (2 * dh)) < 1e-6);
    }
  }
}

TEST_CASE("separated linear problem: harmonic oscillator") {
  const ModelPtr osc = harmonic_oscillator();
  const StagePartition part = make_partition(4, 4);
  const double T = 1.0, q0 = 0.7, pT = -0.3;
  const int n = 40;
  std::vector<Vec> nodes(n + 1, Vec::Zero(2));
  const MeshSolution sol = newton_solve(*osc, part, fix_components({0}, Vec{{q0}}, {1}, Vec{{pT}}),
                                        mesh_from_nodes(nodes, 0.0, T / n, part));
  CHECK(sol.report.converged);
  CHECK(sol.report.iterations <= 2);
  // q = A cos t + B sin t, p = -A sin t + B cos t.
  const double A = q0, B = (pT + q0 * std::sin(T)) / std::cos(T);
  for (int i = 0; i <= n; ++i) {
    const double t = i * T / n;
    CHECK(std::abs(sol.y[i][0] - (A * std::cos(t) + B * std::sin(t))) < 1e-10);
    CHECK(std::abs(sol.y[i][1] - (-A * std::sin(t) + B * std::cos(t))) < 1e-10);
  }
}

TEST_CASE("non-separated conditions") {
  const ModelPtr model = pendulum();
  const StagePartition part = make_partition(6, 2);
  const int n = 20;
  std::vector<Vec> nodes(n + 1, Vec{{0.2, 0.0}});
  const Vec c{{0.5, 0.1}};
  const MeshSolution sol = newton_solve(*model, part, sum_condition(c), mesh_from_nodes(nodes, 0.0, 0.1, part));
  CHECK(sol.report.converged);
  CHECK((sol.y.front() + sol.y.back() - c).norm() < 1e-10);
  // The nodes form an HBVM trajectory.
  const MeshSolution ref = discrete_solution(*model, part, sol.y.front(), 0.1, n);
  CHECK((ref.y.back() - sol.y.back()).norm() < 1e-10);
}

TEST_CASE("quadratic convergence with the exact Jacobian") {
  const ModelPtr model = pendulum();
  const StagePartition part = make_partition(6, 2);
  const int n = 40;
  std::vector<Vec> nodes;
  for (int i = 0; i <= n; ++i) nodes.push_back(Vec{{1.0 - 0.05 * i, -0.5}});
  NewtonOptions opts;
  opts.jacobian = JacobianMode::Exact;
  opts.tol = 1e-13;
  const MeshSolution sol = newton_solve(*model, part, fix_components({0}, Vec{{1.0}}, {0}, Vec{{-1.0}}),
                                        mesh_from_nodes(nodes, 0.0, 0.1, part), opts);
  const auto& r = sol.report.residual_history;
  MESSAGE("residual history: " << [&] {
    std::string s;
    for (double v : r) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2e ", v);
      s += buf;
    }
    return s;
  }());
  int quadratic = 0, run = 0;
  for (size_t j = 0; j + 1 < r.size(); ++j) {
    if (r[j] < 1e-2 && r[j + 1] > 1e-14) {
      run = r[j + 1] <= 10.0 * r[j] * r[j] ? run + 1 : 0;
      quadratic = std::max(quadratic, run);
    }
  }
  CHECK(quadratic >= 2);
}

TEST_CASE("periodic pendulum orbits against the elliptic-integral period") {
  const ModelPtr model = pendulum();
  const StagePartition part = make_partition(6, 2);
  const double qmax = 1.0, E = -std::cos(qmax);
  const double T = testing::pendulum_period(E);
  const int n = 60;
  const Mat anchor = Mat::Identity(2, 2).bottomRows(1);  // p(0) = 0

  SUBCASE("by period") {
    const MeshSolution sol =
        newton_solve(*model, part, PeriodicAnchored{anchor, Vec::Zero(1)}, pendulum_guess(0.8, T, n, part));
    CHECK(sol.report.converged);
    CHECK(sol.y.back() == sol.y.front());
    CHECK(std::abs(sol.y.front()[1]) < 1e-12);
    CHECK(std::abs(model->energy(sol.y.front()) - E) < 1e-5);
    for (const Vec& y : sol.y) CHECK(std::abs(model->energy(y) - model->energy(sol.y.front())) < 1e-12);
  }
  SUBCASE("by energy") {
    const MeshSolution sol = newton_solve(*model, part, PeriodicEnergy{anchor, Vec::Zero(1), E},
                                          pendulum_guess(0.8, 1.05 * 2 * M_PI, n, part));
    CHECK(sol.report.converged);
    CHECK(std::abs(model->energy(sol.y.front()) - E) < 1e-10);
    CHECK(std::abs(sol.period() - T) < 1e-5 * T);
    // Order 2s = 4 in the period.
    const MeshSolution coarse = newton_solve(*model, part, PeriodicEnergy{anchor, Vec::Zero(1), E},
                                             pendulum_guess(0.8, 1.05 * 2 * M_PI, n / 2, part));
    const double ratio = std::abs(coarse.period() - T) / std::abs(sol.period() - T);
    MESSAGE("period error ratio n/2 vs n: " << ratio);
    CHECK(ratio == doctest::Approx(16.0).epsilon(0.3));
    // Restarting at the solution is a fixed point.
    const MeshSolution again = newton_solve(*model, part, PeriodicEnergy{anchor, Vec::Zero(1), E}, sol);
    CHECK(again.report.iterations <= 2);
    CHECK(std::abs(again.h - sol.h) < 1e-8);
  }
}

TEST_CASE("failures carry the best iterate") {
  const ModelPtr model = pendulum();
  const StagePartition part = make_partition(6, 2);
  const double T = testing::pendulum_period(-std::cos(1.0));
  NewtonOptions opts;
  opts.max_iters = 1;
  try {
    newton_solve(*model, part, PeriodicAnchored{Mat::Identity(2, 2).bottomRows(1), Vec::Zero(1)},
                 pendulum_guess(0.8, T, 30, part), opts);
    FAIL("expected NewtonFailure");
  } catch (const NewtonFailure& e) {
    CHECK_FALSE(e.best().report.converged);
    CHECK(e.best().n() == 30);
    CHECK(std::isfinite(e.residual()));
  }

  const ModelPtr kep = kepler();
  std::vector<Vec> through_origin = {Vec{{-0.1, 0.0, 0.0, 1.0}}, Vec{{0.0, 0.0, 0.0, 1.0}}, Vec{{0.1, 0.0, 0.0, 1.0}}};
  MeshSolution bad = mesh_from_nodes(through_origin, 0.0, 0.1, part);
  bad.Z[1].col(0) = Vec::Zero(4);
  try {
    global_residual(*kep, part, fix_components({0, 1}, Vec::Zero(2), {0, 1}, Vec::Zero(2)), bad);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("interval 1") != std::string::npos);
  }
}

TEST_CASE("boundary condition validation") {
  const ModelPtr model = pendulum();
  const StagePartition part = make_partition(2, 1);
  const MeshSolution mesh = pendulum_guess(0.5, 6.0, 10, part);
  CHECK_THROWS_AS(newton_solve(*model, part, PeriodicAnchored{Mat(0, 2), Vec(0)}, mesh), DomainError);
  CHECK_THROWS_AS(newton_solve(*model, part, fix_components({0}, Vec{{1.0}}, {}, Vec(0)), mesh), DomainError);
  MeshSolution short_mesh = mesh;
  short_mesh.y.pop_back();
  CHECK_THROWS_AS(global_residual(*model, part, PeriodicAnchored{Mat::Identity(2, 2).topRows(1), Vec::Zero(1)},
                                  short_mesh),
                  DomainError);
}
