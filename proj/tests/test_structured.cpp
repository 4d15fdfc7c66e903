#include "hbvm/structured_linalg.hpp"

#include "doctest.h"
#include "random_systems.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>

using namespace hbvm;
using testing::Layout;
using testing::random_block_system;

namespace {

double rel(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Identity-shaped separated system with r = 2m: B_a = I, K = I, remaining blocks zero.
BlockSystem identity_system(int m, int s, int n, double diag) {
  const int d = 2 * m, q = d * s;
  BlockSystem sys;
  sys.dim = d;
  sys.stages = s;
  for (int i = 0; i < n; ++i) {
    IntervalBlocks iv{Mat::Zero(q, d), diag * Mat::Identity(q, q), Mat::Zero(d, d), Mat::Zero(d, q), {}, {},
                      Vec::LinSpaced(q, 1.0 + i, 2.0 + i), Vec::LinSpaced(d, -1.0 - i, 3.0)};
    sys.intervals.push_back(iv);
  }
  sys.boundary = SeparatedRows{diag * Mat::Identity(d, d), Vec::Constant(d, 4.0), Mat(0, d), Vec(0)};
  return sys;
}

double seconds(const std::function<void()>& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

TEST_CASE("assembled sizes follow the documented layouts") {
  std::mt19937 rng(1);
  const BlockSystem abd = random_block_system(Layout::Separated, 2, 3, 7, rng);
  CHECK(abd.rows() == 4 * 8 + 12 * 7);
  CHECK(abd.cols() == abd.rows());
  const BlockSystem per = random_block_system(Layout::Periodic, 1, 2, 5, rng, 2, true, true);
  CHECK(per.cols() == 2 * 5 + 4 * 5 + 1);
  CHECK(per.rows() == per.cols() + 2);
  const DenseSystem ds = assemble_dense(per);
  // Energy row first, then anchors; the last step row carries I on delta_0.
  CHECK((ds.A.row(0).head(2) - std::get<PeriodicRows>(per.boundary).BH->head(2)).norm() == 0.0);
  CHECK(ds.A.row(0).tail(ds.A.cols() - 2).norm() == 0.0);
  CHECK((ds.A.bottomLeftCorner(2, 2) - Mat::Identity(2, 2)).norm() == 0.0);
  CHECK((ds.A.col(ds.A.cols() - 1).tail(2) - per.intervals.back().v).norm() == 0.0);
}

TEST_CASE("identity system returns the right-hand side") {
  const BlockSystem sys = identity_system(1, 2, 4, 1.0);
  const DenseSystem ds = assemble_dense(sys);
  CHECK((ds.A - Mat::Identity(ds.A.rows(), ds.A.cols())).norm() == 0.0);
  CHECK(solve_abd(sys) == sys.rhs());
  CHECK(dense_oracle_solve(sys) == sys.rhs());
}

TEST_CASE("diagonal system 2x = 4") {
  const BlockSystem sys = identity_system(1, 1, 1, 2.0);
  const Vec x = dense_oracle_solve(sys);
  CHECK(x[0] == doctest::Approx(2.0));
  CHECK(x[1] == doctest::Approx(2.0));
  CHECK((solve_abd(sys) - x).norm() < 1e-15);
}

TEST_CASE("ABD random 2m=2, s=2, n=5 matches the dense oracle") {
  std::mt19937 rng(5);
  for (int t = 0; t < 5; ++t) {
    const BlockSystem sys = random_block_system(Layout::Separated, 1, 2, 5, rng);
    CHECK(rel(solve_abd(sys), dense_oracle_solve(sys)) < 1e-11);
  }
}

TEST_CASE("BABD with B_b = 0 equals the separated layout") {
  std::mt19937 rng(9);
  BlockSystem coupled = random_block_system(Layout::Coupled, 2, 2, 6, rng);
  auto& cb = std::get<CoupledRows>(coupled.boundary);
  cb.Bb.setZero();
  BlockSystem separated = coupled;
  separated.boundary = SeparatedRows{cb.Ba, cb.b0, Mat(0, 4), Vec(0)};
  CHECK(rel(solve_babd(coupled), solve_abd(separated)) < 1e-12);
}

TEST_CASE("BABD random 2m=2, s=1, n=6 matches the dense oracle") {
  std::mt19937 rng(13);
  for (int t = 0; t < 5; ++t) {
    const BlockSystem sys = random_block_system(Layout::Coupled, 1, 1, 6, rng);
    CHECK(rel(solve_babd(sys), dense_oracle_solve(sys)) < 1e-11);
  }
}

TEST_CASE("BABD periodic structure B_a = I, B_b = -I with consistent data") {
  std::mt19937 rng(17);
  BlockSystem sys = random_block_system(Layout::Coupled, 2, 2, 8, rng);
  auto& cb = std::get<CoupledRows>(sys.boundary);
  cb.Ba = Mat::Identity(4, 4);
  cb.Bb = -Mat::Identity(4, 4);
  // Make the right-hand side consistent with a chosen solution.
  const DenseSystem ds0 = assemble_dense(sys);
  Vec xs = Vec::LinSpaced(ds0.A.cols(), -1.0, 1.0);
  xs.tail(4) = xs.head(4);
  const Vec b = ds0.A * xs;
  cb.b0 = b.head(4);
  for (int i = 0; i < sys.n(); ++i) {
    sys.intervals[i].stage_rhs = b.segment(4 + i * 12, 8);
    sys.intervals[i].step_rhs = b.segment(4 + i * 12 + 8, 4);
  }
  const Vec x = solve_babd(sys);
  const DenseSystem ds = assemble_dense(sys);
  CHECK((ds.A * x - ds.rhs).norm() < 1e-12);
  CHECK((x - xs).norm() < 1e-11);
}

TEST_CASE("least squares on a square consistent system is a direct solve") {
  std::mt19937 rng(21);
  const BlockSystem sys = random_block_system(Layout::Periodic, 1, 2, 6, rng, 0);
  CHECK(sys.rows() == sys.cols());
  const LeastSquaresSolution ls = lstsq_bordered(sys);
  CHECK(ls.residual_norm < 1e-12);
  CHECK(rel(ls.x, dense_oracle_solve(sys)) < 1e-12);
}

TEST_CASE("least squares with one extra row matches dense QR") {
  std::mt19937 rng(25);
  for (int t = 0; t < 5; ++t) {
    const BlockSystem sys = random_block_system(Layout::Periodic, 1, 2, 6, rng, 1);
    CHECK(sys.rows() == sys.cols() + 1);
    const LeastSquaresSolution ls = lstsq_bordered(sys);
    CHECK(rel(ls.x, dense_oracle_solve(sys)) < 1e-10);
    const DenseSystem ds = assemble_dense(sys);
    CHECK(std::abs(ls.residual_norm - (ds.A * ls.x - ds.rhs).norm()) < 1e-12);
  }
}

TEST_CASE("least squares minimiser satisfies the normal equations") {
  std::mt19937 rng(29);
  for (int t = 0; t < 10; ++t) {
    const BlockSystem sys = random_block_system(Layout::Periodic, 1 + t % 2, 1 + t % 3, 4 + t, rng, 1 + t % 2, t % 2,
                                                t % 2);
    const LeastSquaresSolution ls = lstsq_bordered(sys);
    const DenseSystem ds = assemble_dense(sys);
    CHECK(ls.residual_norm > 0.0);
    CHECK((ds.A.transpose() * (ds.A * ls.x - ds.rhs)).norm() < 1e-9 * ds.rhs.norm());
  }
}

TEST_CASE("100 random systems agree with the dense oracle") {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> pick_n(3, 20), pick_m(1, 2), pick_s(1, 3);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int m = pick_m(rng), s = pick_s(rng), n = pick_n(rng);
    const Layout layout = static_cast<Layout>(t % 3);
    const BlockSystem sys =
        random_block_system(layout, m, s, n, rng, 1 + t % (2 * m), (t / 3) % 2 == 0, (t / 3) % 2 == 0);
    Vec x;
    switch (layout) {
      case Layout::Separated: x = solve_abd(sys); break;
      case Layout::Coupled: x = solve_babd(sys); break;
      case Layout::Periodic: x = lstsq_bordered(sys).x; break;
    }
    const double e = rel(x, dense_oracle_solve(sys));
    worst = std::max(worst, e);
    CHECK(e < 1e-10);
  }
  MESSAGE("worst relative discrepancy: " << worst);
}

TEST_CASE("factorization reuse and condition estimate") {
  std::mt19937 rng(33);
  const BlockSystem sys = random_block_system(Layout::Separated, 1, 2, 10, rng);
  const StructuredFactorization f = factor_structured(sys);
  const DenseSystem ds = assemble_dense(sys);
  const Vec b = Vec::LinSpaced(ds.A.rows(), 0.0, 1.0);
  CHECK((ds.A * f.solve(b).x - b).norm() < 1e-12 * b.norm() * f.condition_estimate());
  const double cond1 = ds.A.cwiseAbs().colwise().sum().maxCoeff() *
                       ds.A.inverse().cwiseAbs().colwise().sum().maxCoeff();
  CHECK(f.condition_estimate() <= cond1 * (1 + 1e-10));
  CHECK(f.condition_estimate() >= cond1 / 100);

  const BlockSystem per = random_block_system(Layout::Periodic, 1, 2, 10, rng, 1, true, true);
  const StructuredFactorization g = factor_structured(per);
  CHECK(g.kind() == StructuredFactorization::Kind::Qr);
  CHECK(g.condition_estimate() >= 1.0);
  CHECK(std::isfinite(g.condition_estimate()));
}

TEST_CASE("singular pivot blocks are reported with their interval") {
  std::mt19937 rng(37);
  BlockSystem sys = random_block_system(Layout::Separated, 1, 2, 6, rng);
  sys.intervals[3].K.setZero();
  sys.intervals[3].UT.setZero();
  try {
    solve_abd(sys);
    FAIL("expected SingularSystemError");
  } catch (const SingularSystemError& e) {
    CHECK(e.block() == 3);
    CHECK(std::string(e.what()).find("interval 3") != std::string::npos);
  }

  BlockSystem per = random_block_system(Layout::Periodic, 1, 1, 5, rng, 1);
  per.intervals[2].K.col(0).setZero();
  per.intervals[2].UT.col(0).setZero();
  try {
    lstsq_bordered(per);
    FAIL("expected SingularSystemError");
  } catch (const SingularSystemError& e) {
    CHECK(e.block() == 2);
    CHECK(std::string(e.what()).find("smallest |R_jj|") != std::string::npos);
  }
}

TEST_CASE("shape validation and solver dispatch") {
  std::mt19937 rng(41);
  BlockSystem sys = random_block_system(Layout::Separated, 1, 2, 3, rng);
  CHECK_THROWS_AS(solve_babd(sys), DomainError);
  CHECK_THROWS_AS(lstsq_bordered(sys), DomainError);
  sys.intervals[1].K = Mat::Identity(3, 3);
  CHECK_THROWS_AS(solve_abd(sys), DomainError);
}

TEST_CASE("ABD solve time grows linearly in n") {
  std::mt19937 rng(45);
  const BlockSystem small = random_block_system(Layout::Separated, 2, 2, 200, rng);
  const BlockSystem large = random_block_system(Layout::Separated, 2, 2, 400, rng);
  const double t1 = seconds([&] { solve_abd(small); }, 7);
  const double t2 = seconds([&] { solve_abd(large); }, 7);
  MESSAGE("n=200: " << t1 << " s, n=400: " << t2 << " s, ratio " << t2 / t1);
  CHECK(t2 / t1 <= 2.5);
}
