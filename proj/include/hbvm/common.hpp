#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace hbvm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or a model evaluated outside its domain (e.g. at a singularity).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative method (root finder, stage Newton, global Newton) failed to converge.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// A structured factorization met a numerically singular pivot.
/// `block()` is the mesh interval index (or -1 for the boundary/final block).
class SingularSystemError : public Error {
 public:
  SingularSystemError(const std::string& what, int block, double pivot)
      : Error(what), block_(block), pivot_(pivot) {}
  int block() const noexcept { return block_; }
  double pivot() const noexcept { return pivot_; }

 private:
  int block_;
  double pivot_;
};

/// Applies the canonical matrix J = [0 I; -I 0] to a 2m-vector: (g_p, -g_q).
inline Vec apply_j(const Vec& g) {
  const Eigen::Index m = g.size() / 2;
  Vec out(g.size());
  out.head(m) = g.tail(m);
  out.tail(m) = -g.head(m);
  return out;
}

/// J * M for a matrix with 2m rows (row-block swap and negate).
inline Mat apply_j(const Mat& M) {
  const Eigen::Index m = M.rows() / 2;
  Mat out(M.rows(), M.cols());
  out.topRows(m) = M.bottomRows(m);
  out.bottomRows(m) = -M.topRows(m);
  return out;
}

}  // namespace hbvm
