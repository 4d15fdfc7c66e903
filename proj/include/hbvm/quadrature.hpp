#pragma once

#include "hbvm/common.hpp"

namespace hbvm {

/// Gauss-Legendre rule on [0,1]: nodes strictly increasing, positive weights summing to one.
struct QuadratureRule {
  Vec nodes;
  Vec weights;

  int size() const noexcept { return static_cast<int>(nodes.size()); }
};

/// Legendre data evaluated on a rule:
///   P(i,j)  = P_j(c_i)
///   I(i,j)  = int_0^{c_i} P_j(x) dx
///   Omega   = diag(b)
struct BasisMatrices {
  Mat P;
  Mat I;
  Mat Omega;
};

/// Shifted Legendre polynomial of degree `degree` on [0,1], normalised so that
/// int_0^1 P_i P_j = delta_ij. Three-term recurrence on the orthonormal family.
double legendre_eval(int degree, double x);

/// d/dx of legendre_eval.
double legendre_derivative(int degree, double x);

/// int_0^c P_j(x) dx, from the relation (2j+1) L_j = L'_{j+1} - L'_{j-1}.
double legendre_antiderivative(int degree, double c);

/// k-point Gauss-Legendre rule on [0,1]. Throws ConvergenceError if the root
/// finder stalls and DomainError for k < 1.
QuadratureRule gauss_legendre_rule(int k);

/// P_s, I_s and Omega for the first s Legendre polynomials. Requires 1 <= s <= rule.size().
BasisMatrices basis_matrices(const QuadratureRule& rule, int s);

}  // namespace hbvm
