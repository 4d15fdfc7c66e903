#pragma once

#include "hbvm/common.hpp"

#include <optional>
#include <variant>
#include <vector>

namespace hbvm {

/// Jacobian blocks and right-hand sides of one mesh interval.
///
/// Rows come in two groups: the 2ms stage rows [V K] acting on (delta_{i}, Delta_{i}),
/// then the 2m step rows [L U^T I] acting on (delta_i, Delta_i, delta_{i+1}).
struct IntervalBlocks {
  Mat V;          ///< 2ms x 2m
  Mat K;          ///< 2ms x 2ms
  Mat L;          ///< 2m x 2m
  Mat UT;         ///< 2m x 2ms
  Vec w;          ///< 2ms border column (stepsize derivative); empty when unbordered
  Vec v;          ///< 2m border column
  Vec stage_rhs;  ///< 2ms
  Vec step_rhs;   ///< 2m
};

/// B_a delta_0 = ba (r rows, placed first), B_b delta_n = bb (2m - r rows, placed last).
struct SeparatedRows {
  Mat Ba;
  Vec ba;
  Mat Bb;
  Vec bb;
};

/// B_a delta_0 + B_b delta_n = b0 (2m rows, placed first).
struct CoupledRows {
  Mat Ba;
  Mat Bb;
  Vec b0;
};

/// Periodic layout with delta_n = delta_0 eliminated. Rows, in order: the
/// optional energy row B_H delta_0 (+ border) = gamma, the anchors B_a delta_0 = b0,
/// then the interval rows, with the last step row coupling back to delta_0.
struct PeriodicRows {
  Mat Ba;
  Vec b0;
  std::optional<RowVec> BH;
  double gamma = 0.0;
};

using BoundaryRows = std::variant<SeparatedRows, CoupledRows, PeriodicRows>;

/// Newton system over all mesh unknowns.
///
/// Column order: delta_0, Delta_0, delta_1, Delta_1, ..., Delta_{n-1}, then
/// delta_n (separated/coupled) or delta_h (periodic with a border column).
struct BlockSystem {
  int dim = 0;     ///< 2m
  int stages = 0;  ///< s
  std::vector<IntervalBlocks> intervals;
  BoundaryRows boundary;

  int n() const { return static_cast<int>(intervals.size()); }
  bool bordered() const { return !intervals.empty() && intervals.front().w.size() > 0; }
  int rows() const;
  int cols() const;
  /// Right-hand side in assembled row order.
  Vec rhs() const;
  /// Throws DomainError on inconsistent block shapes.
  void validate() const;
};

struct DenseSystem {
  Mat A;
  Vec rhs;
};

/// The full matrix in the documented row/column order (testing oracle, diagnostics).
DenseSystem assemble_dense(const BlockSystem& sys);

/// Staged elimination over the interval chain. Square layouts use row-pivoted
/// Gaussian elimination restricted to one interval window at a time; the
/// periodic layout uses Householder QR per window and a small dense QR for the
/// border, giving the exact least-squares minimiser. Storage is linear in n.
class StructuredFactorization {
 public:
  enum class Kind { Lu, Qr };

  struct Solution {
    Vec x;
    double residual_norm = 0.0;  ///< Euclidean norm of the unresolved residual (zero for square systems)
  };

  Solution solve(const Vec& rhs) const;
  Kind kind() const { return kind_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  /// LU: ||A||_1 times a probe-vector lower bound on ||A^{-1}||_1.
  /// QR: ratio of the largest to the smallest |diag R| over all windows.
  double condition_estimate() const { return condition_; }

  /// One elimination window: carry rows from the previous window stacked on
  /// top of the rows entering here, over columns [pivot | next | global].
  struct Stage {
    Mat factor;                    // LU: multipliers and U; QR: Q^T applied to [next | global]
    Eigen::HouseholderQR<Mat> qr;  // QR windows only, over the pivot columns
    std::vector<int> swaps;        // LU row interchanges
    std::vector<int> row_ids;      // assembled rows entering this window (after the carry)
    int pivot_start = 0;
    int pivots = 0;
    int next_start = 0;
    int next = 0;
    int carry_in = 0;
  };

 private:
  friend StructuredFactorization factor_structured(const BlockSystem& sys);

  Vec window_rhs(const Stage& st, const Vec& carry, const Vec& rhs) const;

  Kind kind_ = Kind::Lu;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> global_cols_;
  std::vector<Stage> stages_;
  // Final dense block over (next columns of the last window, global columns).
  std::vector<int> final_row_ids_;  // extra assembled rows appended after the last carry
  std::vector<int> final_cols_;
  Eigen::PartialPivLU<Mat> final_lu_;
  Eigen::HouseholderQR<Mat> final_qr_;
  double condition_ = 0.0;
};

/// Factorisation matching the boundary layout.
StructuredFactorization factor_structured(const BlockSystem& sys);

/// Separated boundary rows (ABD). Throws SingularSystemError naming the interval.
Vec solve_abd(const BlockSystem& sys);
/// Coupled boundary rows (BABD).
Vec solve_babd(const BlockSystem& sys);

struct LeastSquaresSolution {
  Vec x;
  double residual_norm = 0.0;
};
/// Periodic (possibly bordered, overdetermined) layout in the least-squares sense.
LeastSquaresSolution lstsq_bordered(const BlockSystem& sys);

/// Dense LU (square) or QR (overdetermined) on the assembled matrix.
Vec dense_oracle_solve(const BlockSystem& sys);

}  // namespace hbvm
