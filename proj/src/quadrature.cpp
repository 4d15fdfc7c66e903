#include "hbvm/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace hbvm {

namespace {

// Values of P_{j-1}(x) and P_j(x) for the orthonormal shifted family.
struct LegendrePair {
  double previous;
  double current;
};

LegendrePair legendre_pair(int degree, double x) {
  const double t = 2.0 * x - 1.0;
  double prev = 0.0;
  double cur = 1.0;
  // P_{j+1} = sqrt(2j+3)/(j+1) * ( sqrt(2j+1) t P_j - j/sqrt(2j-1) P_{j-1} )
  for (int j = 0; j < degree; ++j) {
    const double a = std::sqrt(2.0 * j + 3.0) / (j + 1.0);
    const double back = j == 0 ? 0.0 : j / std::sqrt(2.0 * j - 1.0) * prev;
    const double next = a * (std::sqrt(2.0 * j + 1.0) * t * cur - back);
    prev = cur;
    cur = next;
  }
  return {prev, cur};
}

}  // namespace

double legendre_eval(int degree, double x) {
  if (degree < 0) throw DomainError("legendre_eval: negative degree");
  return legendre_pair(degree, x).current;
}

double legendre_derivative(int degree, double x) {
  if (degree < 0) throw DomainError("legendre_derivative: negative degree");
  if (degree == 0) return 0.0;
  // Differentiate the recurrence alongside the values.
  const double t = 2.0 * x - 1.0;
  double prev = 0.0, cur = 1.0;
  double dprev = 0.0, dcur = 0.0;
  for (int j = 0; j < degree; ++j) {
    const double a = std::sqrt(2.0 * j + 3.0) / (j + 1.0);
    const double sj = std::sqrt(2.0 * j + 1.0);
    const double back = j == 0 ? 0.0 : j / std::sqrt(2.0 * j - 1.0);
    const double next = a * (sj * t * cur - back * prev);
    const double dnext = a * (sj * (2.0 * cur + t * dcur) - back * dprev);
    prev = cur;
    cur = next;
    dprev = dcur;
    dcur = dnext;
  }
  return dcur;
}

double legendre_antiderivative(int degree, double c) {
  if (degree < 0) throw DomainError("legendre_antiderivative: negative degree");
  if (degree == 0) return c;
  // int_0^c P_j = ( P_{j+1}(c)/sqrt(2j+3) - P_{j-1}(c)/sqrt(2j-1) ) / (2 sqrt(2j+1));
  // the contribution at c = 0 vanishes because L_{j+1}(-1) = L_{j-1}(-1).
  const auto [prev, cur] = legendre_pair(degree, c);
  const double t = 2.0 * c - 1.0;
  const int j = degree;
  const double a = std::sqrt(2.0 * j + 3.0) / (j + 1.0);
  const double next = a * (std::sqrt(2.0 * j + 1.0) * t * cur - j / std::sqrt(2.0 * j - 1.0) * prev);
  return (next / std::sqrt(2.0 * j + 3.0) - prev / std::sqrt(2.0 * j - 1.0)) /
         (2.0 * std::sqrt(2.0 * j + 1.0));
}

QuadratureRule gauss_legendre_rule(int k) {
  if (k < 1) throw DomainError("gauss_legendre_rule: k must be positive, got " + std::to_string(k));
  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-15;

  QuadratureRule rule;
  rule.nodes.resize(k);
  rule.weights.resize(k);

  // Roots in the lower half, mirrored to keep the rule exactly symmetric.
  const int half = (k + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev-type initial guess, mapped to [0,1].
    double x = 0.5 * (1.0 - std::cos(std::numbers::pi * (i + 0.75) / (k + 0.5)));
    if (k % 2 == 1 && i == half - 1) {
      x = 0.5;
    } else {
      bool converged = false;
      for (int it = 0; it < kMaxIterations; ++it) {
        const double dx = legendre_eval(k, x) / legendre_derivative(k, x);
        x -= dx;
        if (std::abs(dx) <= kTolerance) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        throw ConvergenceError("gauss_legendre_rule: Newton did not converge for k=" + std::to_string(k),
                               kMaxIterations, std::abs(legendre_eval(k, x)));
      }
    }
    // Christoffel weight: b = 1 / sum_{j<k} P_j(x)^2.
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      const double p = legendre_eval(j, x);
      sum += p * p;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / sum;
    rule.nodes[k - 1 - i] = 1.0 - x;
    rule.weights[k - 1 - i] = rule.weights[i];
  }
  if (k % 2 == 1) rule.nodes[k / 2] = 0.5;
  return rule;
}

BasisMatrices basis_matrices(const QuadratureRule& rule, int s) {
  const int k = rule.size();
  if (s < 1 || s > k) {
    throw DomainError("basis_matrices: need 1 <= s <= k, got s=" + std::to_string(s) +
                      ", k=" + std::to_string(k));
  }
  BasisMatrices out{Mat(k, s), Mat(k, s), rule.weights.asDiagonal()};
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < s; ++j) {
      out.P(i, j) = legendre_eval(j, rule.nodes[i]);
      out.I(i, j) = legendre_antiderivative(j, rule.nodes[i]);
    }
  }
  return out;
}

}  // namespace hbvm
