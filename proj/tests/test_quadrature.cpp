#include "hbvm/quadrature.hpp"

#include "doctest.h"

#include <cmath>
#include <functional>

using namespace hbvm;

namespace {

// Adaptive Simpson: independent of the Gauss machinery under test.
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double adaptive_integral(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50);
}

}  // namespace

TEST_CASE("legendre_eval normalisation") {
  CHECK(legendre_eval(0, 0.3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(legendre_eval(1, 1.0) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK(legendre_eval(1, 0.25) == doctest::Approx(std::sqrt(3.0) * (-0.5)).epsilon(1e-15));
  // P_2 = sqrt(5) (6x^2 - 6x + 1)
  CHECK(legendre_eval(2, 0.7) == doctest::Approx(std::sqrt(5.0) * (6 * 0.49 - 6 * 0.7 + 1)).epsilon(1e-14));

  const QuadratureRule rule = gauss_legendre_rule(10);
  double norm4 = 0.0;
  for (int i = 0; i < rule.size(); ++i) norm4 += rule.weights[i] * std::pow(legendre_eval(4, rule.nodes[i]), 2);
  CHECK(std::abs(norm4 - 1.0) < 1e-13);
}

TEST_CASE("legendre_eval discrete orthonormality up to degree 20") {
  const QuadratureRule rule = gauss_legendre_rule(21);
  for (int a = 0; a <= 20; ++a) {
    for (int b = 0; b <= 20; ++b) {
      double sum = 0.0;
      for (int i = 0; i < rule.size(); ++i) {
        sum += rule.weights[i] * legendre_eval(a, rule.nodes[i]) * legendre_eval(b, rule.nodes[i]);
      }
      CHECK(std::abs(sum - (a == b ? 1.0 : 0.0)) < 1e-13);
    }
  }
}

TEST_CASE("legendre_derivative matches central differences") {
  for (int j = 0; j <= 10; ++j) {
    for (double x : {0.05, 0.3, 0.5, 0.77, 0.99}) {
      const double d = 1e-6;
      const double fd = (legendre_eval(j, x + d) - legendre_eval(j, x - d)) / (2 * d);
      CHECK(legendre_derivative(j, x) == doctest::Approx(fd).epsilon(1e-7).scale(1.0));
    }
  }
}

TEST_CASE("legendre_antiderivative closed values") {
  for (double c : {0.0, 0.1, 0.5, 0.9, 1.0}) CHECK(legendre_antiderivative(0, c) == c);
  for (int j = 1; j <= 12; ++j) CHECK(std::abs(legendre_antiderivative(j, 1.0)) < 1e-14);
  CHECK(legendre_antiderivative(1, 0.5) == doctest::Approx(-std::sqrt(3.0) / 4.0).epsilon(1e-15));
}

TEST_CASE("legendre_antiderivative agrees with adaptive quadrature") {
  for (int j = 0; j <= 12; ++j) {
    for (int i = 0; i <= 100; ++i) {
      const double c = i / 100.0;
      const double ref = adaptive_integral([j](double x) { return legendre_eval(j, x); }, 0.0, c, 1e-15);
      CHECK(std::abs(legendre_antiderivative(j, c) - ref) < 1e-12);
    }
  }
}

TEST_CASE("gauss_legendre_rule small analytic cases") {
  const QuadratureRule r1 = gauss_legendre_rule(1);
  CHECK(r1.nodes[0] == 0.5);
  CHECK(r1.weights[0] == doctest::Approx(1.0).epsilon(1e-15));

  const QuadratureRule r2 = gauss_legendre_rule(2);
  CHECK(r2.nodes[0] == doctest::Approx((3.0 - std::sqrt(3.0)) / 6.0).epsilon(1e-15));
  CHECK(r2.nodes[1] == doctest::Approx((3.0 + std::sqrt(3.0)) / 6.0).epsilon(1e-15));
  CHECK(r2.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r2.weights[1] == doctest::Approx(0.5).epsilon(1e-15));

  const QuadratureRule r6 = gauss_legendre_rule(6);
  double x11 = 0.0;
  for (int i = 0; i < 6; ++i) x11 += r6.weights[i] * std::pow(r6.nodes[i], 11);
  CHECK(std::abs(x11 - 1.0 / 12.0) < 1e-15);
}

TEST_CASE("gauss_legendre_rule invariants for k <= 64") {
  for (int k = 1; k <= 64; ++k) {
    CAPTURE(k);
    const QuadratureRule rule = gauss_legendre_rule(k);
    REQUIRE(rule.size() == k);
    CHECK(std::abs(rule.weights.sum() - 1.0) < 1e-14);
    for (int i = 0; i < k; ++i) {
      CHECK(rule.weights[i] > 0.0);
      CHECK(rule.nodes[i] > 0.0);
      CHECK(rule.nodes[i] < 1.0);
      if (i > 0) CHECK(rule.nodes[i] > rule.nodes[i - 1]);
      CHECK(std::abs(rule.nodes[i] + rule.nodes[k - 1 - i] - 1.0) < 1e-14);
      CHECK(std::abs(rule.weights[i] - rule.weights[k - 1 - i]) < 1e-14);
      // Root location to one ulp; the absolute residual of P_k reaches its own
      // rounding floor (~k eps sqrt(2k+1)) beyond k = 24.
      CHECK(std::abs(legendre_eval(k, rule.nodes[i]) / legendre_derivative(k, rule.nodes[i])) < 1e-15);
      if (k <= 24) CHECK(std::abs(legendre_eval(k, rule.nodes[i])) < 1e-13);
    }
    for (int d = 0; d <= 2 * k - 1; ++d) {
      double sum = 0.0;
      for (int i = 0; i < k; ++i) sum += rule.weights[i] * std::pow(rule.nodes[i], d);
      CHECK(std::abs(sum - 1.0 / (d + 1)) < 1e-13);
    }
  }
}

TEST_CASE("gauss_legendre_rule rejects k < 1") { CHECK_THROWS_AS(gauss_legendre_rule(0), DomainError); }

TEST_CASE("basis_matrices") {
  const QuadratureRule r2 = gauss_legendre_rule(2);
  const BasisMatrices b22 = basis_matrices(r2, 2);
  CHECK(b22.P(0, 0) == doctest::Approx(1.0));
  CHECK(b22.P(0, 1) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(b22.P(1, 1) == doctest::Approx(1.0).epsilon(1e-14));

  const QuadratureRule r5 = gauss_legendre_rule(5);
  const BasisMatrices b51 = basis_matrices(r5, 1);
  CHECK((b51.I.col(0) - r5.nodes).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((b51.P.col(0).array() == 1.0).all());

  const QuadratureRule r6 = gauss_legendre_rule(6);
  for (int s = 1; s <= 6; ++s) {
    const BasisMatrices b = basis_matrices(r6, s);
    const Mat gram = b.P.transpose() * b.Omega * b.P;
    CHECK((gram - Mat::Identity(s, s)).lpNorm<Eigen::Infinity>() < 1e-13);
  }
  CHECK_THROWS_AS(basis_matrices(r2, 3), DomainError);
}
