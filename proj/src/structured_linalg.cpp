#include "hbvm/structured_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hbvm {

namespace {

// A dense block in an assembled row group, column-major with ld = rows.
struct Piece {
  int col;
  const double* data;
  int rows;
  int cols;
  bool identity;
};

struct RowGroup {
  int row;
  int rows;
  const double* rhs;
  std::vector<Piece> pieces;
};

Piece piece(int col, const Mat& m) { return {col, m.data(), int(m.rows()), int(m.cols()), false}; }
Piece piece(int col, const Vec& v) { return {col, v.data(), int(v.size()), 1, false}; }
Piece piece(int col, const RowVec& v) { return {col, v.data(), 1, int(v.size()), false}; }
Piece eye(int col, int d) { return {col, nullptr, d, d, true}; }

double piece_value(const Piece& p, int i, int j) {
  if (p.identity) return i == j ? 1.0 : 0.0;
  return p.data[i + j * p.rows];
}

// Column/row geometry shared by assembly and factorisation.
struct Layout {
  enum Type { Separated, Coupled, Periodic } type;
  int d, q, n, r;
  bool bordered, energy_row;

  int col_y(int i) const { return type == Periodic && i == n ? 0 : i * (d + q); }
  int col_z(int i) const { return i * (d + q) + d; }
  int col_h() const { return n * (d + q); }
  int head_rows() const {
    switch (type) {
      case Separated: return r;
      case Coupled: return d;
      default: return (energy_row ? 1 : 0) + r;
    }
  }
  int interval_row(int i) const { return head_rows() + i * (q + d); }
  int rows() const { return head_rows() + n * (q + d) + (type == Separated ? d - r : 0); }
  int cols() const { return type == Periodic ? n * (d + q) + (bordered ? 1 : 0) : n * (d + q) + d; }
};

Layout layout_of(const BlockSystem& sys) {
  Layout lay{};
  lay.d = sys.dim;
  lay.q = sys.dim * sys.stages;
  lay.n = sys.n();
  lay.bordered = sys.bordered();
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, SeparatedRows>) {
          lay.type = Layout::Separated;
          lay.r = int(b.Ba.rows());
        } else if constexpr (std::is_same_v<T, CoupledRows>) {
          lay.type = Layout::Coupled;
          lay.r = sys.dim;
        } else {
          lay.type = Layout::Periodic;
          lay.r = int(b.Ba.rows());
          lay.energy_row = b.BH.has_value();
        }
      },
      sys.boundary);
  return lay;
}

RowGroup interval_group(const BlockSystem& sys, const Layout& lay, int i, bool stage_rows) {
  const IntervalBlocks& iv = sys.intervals[i];
  RowGroup g;
  if (stage_rows) {
    g = {lay.interval_row(i), lay.q, iv.stage_rhs.data(), {piece(lay.col_y(i), iv.V), piece(lay.col_z(i), iv.K)}};
    if (lay.bordered) g.pieces.push_back(piece(lay.col_h(), iv.w));
  } else {
    g = {lay.interval_row(i) + lay.q, lay.d, iv.step_rhs.data(),
         {piece(lay.col_y(i), iv.L), piece(lay.col_z(i), iv.UT), eye(lay.col_y(i + 1), lay.d)}};
    if (lay.bordered) g.pieces.push_back(piece(lay.col_h(), iv.v));
  }
  return g;
}

// Boundary rows that open the chain (head) and close it (tail).
std::vector<RowGroup> head_groups(const BlockSystem& sys, const Layout& lay) {
  std::vector<RowGroup> out;
  if (const auto* b = std::get_if<SeparatedRows>(&sys.boundary)) {
    if (lay.r > 0) out.push_back({0, lay.r, b->ba.data(), {piece(0, b->Ba)}});
  } else if (const auto* b = std::get_if<CoupledRows>(&sys.boundary)) {
    out.push_back({0, lay.d, b->b0.data(), {piece(0, b->Ba), piece(lay.col_y(lay.n), b->Bb)}});
  } else {
    const auto& p = std::get<PeriodicRows>(sys.boundary);
    int row = 0;
    if (p.BH) out.push_back({row++, 1, &p.gamma, {piece(0, *p.BH)}});
    if (lay.r > 0) out.push_back({row, lay.r, p.b0.data(), {piece(0, p.Ba)}});
  }
  return out;
}

std::vector<RowGroup> tail_groups(const BlockSystem& sys, const Layout& lay) {
  std::vector<RowGroup> out;
  if (const auto* b = std::get_if<SeparatedRows>(&sys.boundary)) {
    if (lay.d - lay.r > 0) {
      out.push_back({lay.interval_row(lay.n), lay.d - lay.r, b->bb.data(), {piece(lay.col_y(lay.n), b->Bb)}});
    }
  }
  return out;
}

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw DomainError("BlockSystem: " + what);
}

// Maps system column indices onto window columns [pivot | next | global].
struct ColumnMap {
  int pivot_start, pivots, next_start, next;
  const std::vector<int>* globals;

  int operator()(int c) const {
    if (c >= pivot_start && c < pivot_start + pivots) return c - pivot_start;
    if (c >= next_start && c < next_start + next) return pivots + c - next_start;
    for (size_t g = 0; g < globals->size(); ++g) {
      if ((*globals)[g] == c) return pivots + next + int(g);
    }
    return -1;
  }
};

void scatter(const RowGroup& g, const ColumnMap& map, Mat& window, int row0) {
  for (const Piece& p : g.pieces) {
    for (int j = 0; j < p.cols; ++j) {
      const int wc = map(p.col + j);
      if (wc < 0) throw std::logic_error("structured factorization: block outside its window");
      for (int i = 0; i < p.rows; ++i) window(row0 + i, wc) += piece_value(p, i, j);
    }
  }
}

double max_abs_entry(const std::vector<RowGroup>& groups) {
  double m = 0.0;
  for (const RowGroup& g : groups) {
    for (const Piece& p : g.pieces) {
      if (p.identity) {
        m = std::max(m, 1.0);
      } else {
        m = std::max(m, Eigen::Map<const Mat>(p.data, p.rows, p.cols).lpNorm<Eigen::Infinity>());
      }
    }
  }
  return m;
}

std::vector<RowGroup> all_groups(const BlockSystem& sys, const Layout& lay) {
  std::vector<RowGroup> groups = head_groups(sys, lay);
  for (int i = 0; i < lay.n; ++i) {
    groups.push_back(interval_group(sys, lay, i, true));
    groups.push_back(interval_group(sys, lay, i, false));
  }
  for (RowGroup& g : tail_groups(sys, lay)) groups.push_back(std::move(g));
  return groups;
}

}  // namespace

int BlockSystem::rows() const { return layout_of(*this).rows(); }
int BlockSystem::cols() const { return layout_of(*this).cols(); }

void BlockSystem::validate() const {
  require_shape(dim > 0 && dim % 2 == 0, "dim must be positive and even");
  require_shape(stages >= 1, "stages must be >= 1");
  require_shape(!intervals.empty(), "at least one interval required");
  const int d = dim, q = dim * stages;
  const bool border = bordered();
  for (size_t i = 0; i < intervals.size(); ++i) {
    const IntervalBlocks& iv = intervals[i];
    const std::string at = " (interval " + std::to_string(i) + ")";
    require_shape(iv.V.rows() == q && iv.V.cols() == d, "V must be 2ms x 2m" + at);
    require_shape(iv.K.rows() == q && iv.K.cols() == q, "K must be 2ms x 2ms" + at);
    require_shape(iv.L.rows() == d && iv.L.cols() == d, "L must be 2m x 2m" + at);
    require_shape(iv.UT.rows() == d && iv.UT.cols() == q, "U^T must be 2m x 2ms" + at);
    require_shape(iv.stage_rhs.size() == q && iv.step_rhs.size() == d, "rhs segment sizes" + at);
    if (border) {
      require_shape(iv.w.size() == q && iv.v.size() == d, "border column sizes" + at);
    } else {
      require_shape(iv.w.size() == 0 && iv.v.size() == 0, "border column present on some intervals only" + at);
    }
  }
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, SeparatedRows>) {
          const auto r = b.Ba.rows();
          require_shape(!border, "separated layout has no border column");
          require_shape(r <= d && (r == 0 || b.Ba.cols() == d) && b.ba.size() == r, "B_a must be r x 2m");
          require_shape(b.Bb.rows() == d - r && (d - r == 0 || b.Bb.cols() == d) && b.bb.size() == d - r,
                        "B_b must be (2m - r) x 2m");
        } else if constexpr (std::is_same_v<T, CoupledRows>) {
          require_shape(!border, "coupled layout has no border column");
          require_shape(b.Ba.rows() == d && b.Ba.cols() == d && b.Bb.rows() == d && b.Bb.cols() == d &&
                            b.b0.size() == d,
                        "coupled B_a, B_b must be 2m x 2m");
        } else {
          const auto r = b.Ba.rows();
          require_shape(r <= d && (r == 0 || b.Ba.cols() == d) && b.b0.size() == r, "anchor B_a must be r x 2m");
          require_shape(!b.BH || b.BH->size() == d, "B_H must be 1 x 2m");
        }
      },
      boundary);
}

Vec BlockSystem::rhs() const {
  const Layout lay = layout_of(*this);
  Vec out = Vec::Zero(lay.rows());
  for (const RowGroup& g : all_groups(*this, lay)) out.segment(g.row, g.rows) = Eigen::Map<const Vec>(g.rhs, g.rows);
  return out;
}

DenseSystem assemble_dense(const BlockSystem& sys) {
  sys.validate();
  const Layout lay = layout_of(sys);
  DenseSystem out{Mat::Zero(lay.rows(), lay.cols()), Vec::Zero(lay.rows())};
  for (const RowGroup& g : all_groups(sys, lay)) {
    out.rhs.segment(g.row, g.rows) = Eigen::Map<const Vec>(g.rhs, g.rows);
    for (const Piece& p : g.pieces) {
      for (int j = 0; j < p.cols; ++j) {
        for (int i = 0; i < p.rows; ++i) out.A(g.row + i, p.col + j) += piece_value(p, i, j);
      }
    }
  }
  return out;
}

Vec StructuredFactorization::window_rhs(const Stage& st, const Vec& carry, const Vec& rhs) const {
  Vec w(st.carry_in + Eigen::Index(st.row_ids.size()));
  w.head(st.carry_in) = carry;
  for (size_t i = 0; i < st.row_ids.size(); ++i) w[st.carry_in + Eigen::Index(i)] = rhs[st.row_ids[i]];
  return w;
}

StructuredFactorization::Solution StructuredFactorization::solve(const Vec& rhs) const {
  if (rhs.size() != rows_) throw DomainError("StructuredFactorization::solve: rhs has the wrong length");
  const int g = int(global_cols_.size());
  std::vector<Vec> heads(stages_.size());
  Vec carry(0);

  // Forward sweep: transform the rhs window by window.
  for (size_t k = 0; k < stages_.size(); ++k) {
    const Stage& st = stages_[k];
    Vec w = window_rhs(st, carry, rhs);
    if (kind_ == Kind::Lu) {
      // Multipliers are stored in the final row order, so all interchanges go first.
      for (int j = 0; j < st.pivots; ++j) std::swap(w[j], w[st.swaps[j]]);
      for (int j = 0; j < st.pivots; ++j) w.tail(w.size() - j - 1) -= st.factor.col(j).tail(w.size() - j - 1) * w[j];
    } else {
      w.applyOnTheLeft(st.qr.householderQ().adjoint());
    }
    heads[k] = w.head(st.pivots);
    carry = w.tail(w.size() - st.pivots);
  }

  // Final dense block.
  const int nf = int(final_cols_.size());
  Vec fr(carry.size() + Eigen::Index(final_row_ids_.size()));
  fr.head(carry.size()) = carry;
  for (size_t i = 0; i < final_row_ids_.size(); ++i) fr[carry.size() + Eigen::Index(i)] = rhs[final_row_ids_[i]];
  Solution sol;
  sol.x = Vec::Zero(cols_);
  Vec xf;
  if (fr.size() == nf) {
    xf = kind_ == Kind::Lu ? Vec(final_lu_.solve(fr)) : Vec(final_qr_.solve(fr));
  } else {
    fr.applyOnTheLeft(final_qr_.householderQ().adjoint());
    xf = final_qr_.matrixQR().topLeftCorner(nf, nf).triangularView<Eigen::Upper>().solve(fr.head(nf));
    sol.residual_norm = fr.tail(fr.size() - nf).norm();
  }
  for (int i = 0; i < nf; ++i) sol.x[final_cols_[i]] = xf[i];

  // Back substitution, window by window.
  for (size_t kk = stages_.size(); kk-- > 0;) {
    const Stage& st = stages_[kk];
    Vec known(st.next + g);
    known.head(st.next) = sol.x.segment(st.next_start, st.next);
    for (int j = 0; j < g; ++j) known[st.next + j] = sol.x[global_cols_[j]];
    Vec b = heads[kk];
    if (kind_ == Kind::Lu) {
      b -= st.factor.topRightCorner(st.pivots, st.next + g) * known;
      sol.x.segment(st.pivot_start, st.pivots) =
          st.factor.topLeftCorner(st.pivots, st.pivots).triangularView<Eigen::Upper>().solve(b);
    } else {
      b -= st.factor.topRows(st.pivots) * known;
      sol.x.segment(st.pivot_start, st.pivots) =
          st.qr.matrixQR().topLeftCorner(st.pivots, st.pivots).triangularView<Eigen::Upper>().solve(b);
    }
  }
  return sol;
}

StructuredFactorization factor_structured(const BlockSystem& sys) {
  sys.validate();
  const Layout lay = layout_of(sys);
  const int d = lay.d, q = lay.q, n = lay.n;

  StructuredFactorization f;
  f.kind_ = lay.type == Layout::Periodic ? StructuredFactorization::Kind::Qr : StructuredFactorization::Kind::Lu;
  f.rows_ = lay.rows();
  f.cols_ = lay.cols();
  if (lay.type == Layout::Coupled) {
    for (int j = 0; j < d; ++j) f.global_cols_.push_back(lay.col_y(n) + j);
  } else if (lay.type == Layout::Periodic) {
    for (int j = 0; j < d; ++j) f.global_cols_.push_back(j);
    if (lay.bordered) f.global_cols_.push_back(lay.col_h());
  }
  const int g = int(f.global_cols_.size());
  const bool lu = f.kind_ == StructuredFactorization::Kind::Lu;

  const std::vector<RowGroup> head = head_groups(sys, lay);
  const std::vector<RowGroup> tail = tail_groups(sys, lay);
  double scale = std::max(1.0, max_abs_entry(head));
  scale = std::max(scale, max_abs_entry(tail));
  for (int i = 0; i < n; ++i) {
    scale = std::max(scale, max_abs_entry({interval_group(sys, lay, i, true), interval_group(sys, lay, i, false)}));
  }
  const double pivot_tol = 1e-14 * scale;
  double rmax = 0.0, rmin = std::numeric_limits<double>::infinity();

  Mat carry(0, 0);
  std::vector<int> carry_cols;  // system column index of each carry column
  f.stages_.resize(n);
  for (int i = 0; i < n; ++i) {
    StructuredFactorization::Stage& st = f.stages_[i];
    const bool first_periodic = lay.type == Layout::Periodic && i == 0;
    st.pivot_start = first_periodic ? lay.col_z(0) : lay.col_y(i);
    st.pivots = first_periodic ? q : d + q;
    const bool last_global = i == n - 1 && lay.type != Layout::Separated;
    st.next_start = lay.col_y(i + 1);
    st.next = last_global ? 0 : d;
    st.carry_in = int(carry.rows());
    const ColumnMap map{st.pivot_start, st.pivots, st.next_start, st.next, &f.global_cols_};

    std::vector<RowGroup> entering;
    if (i == 0 && lay.type != Layout::Periodic) entering = head;
    entering.push_back(interval_group(sys, lay, i, true));
    entering.push_back(interval_group(sys, lay, i, false));
    int new_rows = 0;
    for (const RowGroup& grp : entering) {
      for (int k = 0; k < grp.rows; ++k) st.row_ids.push_back(grp.row + k);
      new_rows += grp.rows;
    }
    const int R = st.carry_in + new_rows;
    const int C = st.pivots + st.next + g;
    if (R < st.pivots) throw SingularSystemError("structured factorization: too few rows in interval " +
                                                     std::to_string(i), i, 0.0);
    Mat window = Mat::Zero(R, C);
    for (size_t c = 0; c < carry_cols.size(); ++c) {
      const int wc = map(carry_cols[c]);
      if (wc < 0) throw std::logic_error("structured factorization: carry column outside its window");
      window.col(wc).head(st.carry_in) = carry.col(Eigen::Index(c));
    }
    int row0 = st.carry_in;
    for (const RowGroup& grp : entering) {
      scatter(grp, map, window, row0);
      row0 += grp.rows;
    }

    const std::string where = "structured factorization: singular pivot block in interval " + std::to_string(i);
    if (lu) {
      st.swaps.resize(st.pivots);
      for (int j = 0; j < st.pivots; ++j) {
        Eigen::Index arg;
        const double piv = window.col(j).tail(R - j).cwiseAbs().maxCoeff(&arg);
        if (!(piv > pivot_tol)) throw SingularSystemError(where, i, piv);
        st.swaps[j] = j + int(arg);
        if (arg != 0) window.row(j).swap(window.row(j + arg));
        window.col(j).tail(R - j - 1) /= window(j, j);
        window.bottomRightCorner(R - j - 1, C - j - 1).noalias() -=
            window.col(j).tail(R - j - 1) * window.row(j).tail(C - j - 1);
      }
      carry = window.bottomRightCorner(R - st.pivots, st.next + g);
      st.factor = std::move(window);
    } else {
      st.qr.compute(window.leftCols(st.pivots));
      const Vec diag = st.qr.matrixQR().diagonal().cwiseAbs();
      Eigen::Index arg;
      const double smallest = diag.minCoeff(&arg);
      if (!(smallest > pivot_tol)) {
        std::ostringstream msg;
        msg << "least squares: rank deficient in interval " << i << ", smallest |R_jj| = " << smallest;
        throw SingularSystemError(msg.str(), i, smallest);
      }
      rmax = std::max(rmax, diag.maxCoeff());
      rmin = std::min(rmin, smallest);
      st.factor = window.rightCols(st.next + g);
      st.factor.applyOnTheLeft(st.qr.householderQ().adjoint());
      carry = st.factor.bottomRows(R - st.pivots);
    }
    carry_cols.clear();
    for (int j = 0; j < st.next; ++j) carry_cols.push_back(st.next_start + j);
    for (int c : f.global_cols_) carry_cols.push_back(c);
  }

  // Closing block: the last carry plus the remaining boundary rows.
  const std::vector<RowGroup>& closing = lay.type == Layout::Periodic ? head : tail;
  f.final_cols_ = carry_cols;
  int extra = 0;
  for (const RowGroup& grp : closing) {
    for (int k = 0; k < grp.rows; ++k) f.final_row_ids_.push_back(grp.row + k);
    extra += grp.rows;
  }
  const int nf = int(f.final_cols_.size());
  Mat fin = Mat::Zero(carry.rows() + extra, nf);
  fin.topRows(carry.rows()) = carry;
  {
    const ColumnMap map{0, 0, 0, 0, &f.final_cols_};
    int row0 = int(carry.rows());
    for (const RowGroup& grp : closing) {
      scatter(grp, map, fin, row0);
      row0 += grp.rows;
    }
  }
  if (fin.rows() < nf) throw SingularSystemError("structured factorization: underdetermined boundary block", n, 0.0);
  if (lu) {
    f.final_lu_.compute(fin);
    const Vec diag = f.final_lu_.matrixLU().diagonal().cwiseAbs();
    const double smallest = nf > 0 ? diag.minCoeff() : 1.0;
    if (!(smallest > pivot_tol)) {
      throw SingularSystemError("structured factorization: singular boundary block", n, smallest);
    }
  } else {
    f.final_qr_.compute(fin);
    if (nf > 0) {
      Eigen::Index arg;
      const Vec diag = f.final_qr_.matrixQR().diagonal().cwiseAbs();
      const double smallest = diag.minCoeff(&arg);
      if (!(smallest > pivot_tol)) {
        std::ostringstream msg;
        msg << "least squares: rank deficient boundary block, smallest |R_jj| = " << smallest;
        throw SingularSystemError(msg.str(), n, smallest);
      }
      rmax = std::max(rmax, diag.maxCoeff());
      rmin = std::min(rmin, smallest);
    }
  }

  if (lu) {
    Vec colsum = Vec::Zero(f.cols_);
    for (const RowGroup& grp : all_groups(sys, lay)) {
      for (const Piece& p : grp.pieces) {
        for (int j = 0; j < p.cols; ++j) {
          for (int k = 0; k < p.rows; ++k) colsum[p.col + j] += std::abs(piece_value(p, k, j));
        }
      }
    }
    double inv = 0.0;
    for (int probe = 0; probe < 2; ++probe) {
      Vec b(f.rows_);
      for (int k = 0; k < f.rows_; ++k) b[k] = probe == 0 ? 1.0 : (k % 2 ? -1.0 : 1.0) * (1.0 + double(k) / f.rows_);
      inv = std::max(inv, f.solve(b).x.lpNorm<1>() / b.lpNorm<1>());
    }
    f.condition_ = colsum.maxCoeff() * inv;
  } else {
    f.condition_ = rmax / rmin;
  }
  return f;
}

Vec solve_abd(const BlockSystem& sys) {
  if (!std::holds_alternative<SeparatedRows>(sys.boundary)) throw DomainError("solve_abd: separated rows required");
  const StructuredFactorization f = factor_structured(sys);
  return f.solve(sys.rhs()).x;
}

Vec solve_babd(const BlockSystem& sys) {
  if (!std::holds_alternative<CoupledRows>(sys.boundary)) throw DomainError("solve_babd: coupled rows required");
  const StructuredFactorization f = factor_structured(sys);
  return f.solve(sys.rhs()).x;
}

LeastSquaresSolution lstsq_bordered(const BlockSystem& sys) {
  if (!std::holds_alternative<PeriodicRows>(sys.boundary)) throw DomainError("lstsq_bordered: periodic rows required");
  const StructuredFactorization f = factor_structured(sys);
  auto sol = f.solve(sys.rhs());
  return {std::move(sol.x), sol.residual_norm};
}

Vec dense_oracle_solve(const BlockSystem& sys) {
  const DenseSystem ds = assemble_dense(sys);
  if (ds.A.rows() < ds.A.cols()) throw DomainError("dense_oracle_solve: underdetermined system");
  if (ds.A.rows() == ds.A.cols()) {
    const Eigen::FullPivLU<Mat> lu(ds.A);
    if (!lu.isInvertible()) throw SingularSystemError("dense_oracle_solve: singular matrix", -1, 0.0);
    return lu.solve(ds.rhs);
  }
  const Eigen::ColPivHouseholderQR<Mat> qr(ds.A);
  if (qr.rank() < ds.A.cols()) throw SingularSystemError("dense_oracle_solve: rank deficient matrix", -1, 0.0);
  return qr.solve(ds.rhs);
}

}  // namespace hbvm
