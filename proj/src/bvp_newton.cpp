#include "hbvm/bvp_newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace hbvm {

namespace {

bool is_periodic(const BoundarySpec& spec) {
  return std::holds_alternative<PeriodicAnchored>(spec) || std::holds_alternative<PeriodicEnergy>(spec);
}

bool has_h_unknown(const BoundarySpec& spec) { return std::holds_alternative<PeriodicEnergy>(spec); }

void check_mesh(const HamiltonianModel& model, const StagePartition& part, const MeshSolution& mesh) {
  const int d = model.dim();
  if (mesh.n() < 1) throw DomainError("mesh must have at least one interval");
  if (int(mesh.y.size()) != mesh.n() + 1) throw DomainError("mesh must carry n + 1 nodes");
  for (const Vec& y : mesh.y) {
    if (y.size() != d) throw DomainError("mesh node dimension does not match the model");
  }
  for (const Mat& z : mesh.Z) {
    if (z.rows() != d || z.cols() != part.s) throw DomainError("mesh stage block must be 2m x s");
  }
  if (!std::isfinite(mesh.h) || mesh.h == 0.0) throw DomainError("mesh stepsize must be finite and nonzero");
}

// Silent stages and J grad H at every stage of one interval.
struct IntervalEval {
  Mat W, FZ, FW;
};

IntervalEval eval_interval(const HamiltonianModel& model, const StagePartition& part, const Vec& y_left,
                           const Mat& Z) {
  IntervalEval ev;
  ev.W = y_left * part.a0.transpose() + Z * part.A_map.transpose();
  ev.FZ.resize(y_left.size(), part.s);
  ev.FW.resize(y_left.size(), part.k - part.s);
  for (int l = 0; l < part.s; ++l) ev.FZ.col(l) = model.vector_field(Z.col(l));
  for (int j = 0; j < part.k - part.s; ++j) ev.FW.col(j) = model.vector_field(ev.W.col(j));
  return ev;
}

// Blocks from one J*Hessian per fundamental stage (hz) and per silent stage (hw).
IntervalBlocks blocks_from_hessians(const StagePartition& part, double h, const std::vector<Mat>& hz,
                                    const std::vector<Mat>& hw) {
  const int s = part.s, silent = part.k - part.s;
  const int d = int(hz.front().rows()), q = d * s;
  const Mat I = Mat::Identity(d, d);
  IntervalBlocks b;
  b.V.resize(q, d);
  b.K.resize(q, q);
  b.UT.resize(d, q);
  b.L = -I;
  for (int j = 0; j < silent; ++j) b.L -= h * part.beta2[j] * part.a0[j] * hw[j];
  for (int i = 0; i < s; ++i) {
    Mat v = -I;
    for (int j = 0; j < silent; ++j) v -= h * part.B2(i, j) * part.a0[j] * hw[j];
    b.V.middleRows(i * d, d) = v;
    for (int l = 0; l < s; ++l) {
      Mat k = (i == l ? 1.0 : 0.0) * I - h * part.B1(i, l) * hz[l];
      for (int j = 0; j < silent; ++j) k -= h * part.B2(i, j) * part.A_map(j, l) * hw[j];
      b.K.block(i * d, l * d, d, d) = k;
    }
  }
  for (int l = 0; l < s; ++l) {
    Mat u = -h * part.beta1[l] * hz[l];
    for (int j = 0; j < silent; ++j) u -= h * part.beta2[j] * part.A_map(j, l) * hw[j];
    b.UT.middleCols(l * d, d) = u;
  }
  return b;
}

template <class F>
auto at_interval(int i, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw DomainError("interval " + std::to_string(i) + ": " + e.what());
  }
}

struct Head {
  Mat B;      // rows acting on y_0
  Mat Bn;     // rows acting on y_n (non-separated only)
  Vec value;  // residual
};

}  // namespace

Separated fix_components(const std::vector<int>& first, const Vec& a, const std::vector<int>& last, const Vec& b) {
  if (a.size() != Eigen::Index(first.size()) || b.size() != Eigen::Index(last.size())) {
    throw DomainError("fix_components: index and value counts differ");
  }
  auto selector = [](const std::vector<int>& idx, Eigen::Index d) {
    Mat s = Mat::Zero(Eigen::Index(idx.size()), d);
    for (size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || idx[r] >= d) throw DomainError("fix_components: component index out of range");
      s(Eigen::Index(r), idx[r]) = 1.0;
    }
    return s;
  };
  Separated sep;
  sep.ga = [=](const Vec& y) { return Vec(selector(first, y.size()) * y - a); };
  sep.ga_jacobian = [=](const Vec& y) { return selector(first, y.size()); };
  sep.gb = [=](const Vec& y) { return Vec(selector(last, y.size()) * y - b); };
  sep.gb_jacobian = [=](const Vec& y) { return selector(last, y.size()); };
  return sep;
}

MeshSolution mesh_from_nodes(const std::vector<Vec>& nodes, double t0, double h, const StagePartition& part) {
  if (nodes.size() < 2) throw DomainError("mesh_from_nodes: need at least two nodes");
  MeshSolution mesh;
  mesh.t0 = t0;
  mesh.h = h;
  mesh.y = nodes;
  for (size_t i = 0; i + 1 < nodes.size(); ++i) {
    Mat z(nodes[i].size(), part.s);
    for (int l = 0; l < part.s; ++l) z.col(l) = nodes[i] + part.c_fundamental[l] * (nodes[i + 1] - nodes[i]);
    mesh.Z.push_back(z);
  }
  return mesh;
}

IntervalBlocks assemble_interval_blocks(const HamiltonianModel& model, const StagePartition& part,
                                        const Vec& y_left, const Vec& y_right, double h) {
  if (y_left.size() != model.dim() || y_right.size() != model.dim()) {
    throw DomainError("assemble_interval_blocks: node dimension does not match the model");
  }
  const Mat jh = apply_j(model.hessian(0.5 * (y_left + y_right)));
  return blocks_from_hessians(part, h, std::vector<Mat>(part.s, jh), std::vector<Mat>(part.k - part.s, jh));
}

IntervalBlocks exact_interval_blocks(const HamiltonianModel& model, const StagePartition& part, const Vec& y_left,
                                     const Mat& Z, double h) {
  const Mat W = y_left * part.a0.transpose() + Z * part.A_map.transpose();
  std::vector<Mat> hz, hw;
  for (int l = 0; l < part.s; ++l) hz.push_back(apply_j(model.hessian(Z.col(l))));
  for (int j = 0; j < part.k - part.s; ++j) hw.push_back(apply_j(model.hessian(W.col(j))));
  return blocks_from_hessians(part, h, hz, hw);
}

std::vector<IntervalRhs> residuals(const HamiltonianModel& model, const StagePartition& part,
                                   const std::vector<Vec>& y, const std::vector<Mat>& Z, double h) {
  if (y.size() != Z.size() + 1) throw DomainError("residuals: need n + 1 nodes for n stage blocks");
  std::vector<IntervalRhs> out(Z.size());
  for (size_t i = 0; i < Z.size(); ++i) {
    at_interval(int(i), [&] {
      const IntervalEval ev = eval_interval(model, part, y[i], Z[i]);
      const Mat stage = Z[i] - y[i].replicate(1, part.s) - h * (ev.FZ * part.B1.transpose() + ev.FW * part.B2.transpose());
      out[i].stage = -Eigen::Map<const Vec>(stage.data(), stage.size());
      out[i].step = -(y[i + 1] - y[i] - h * (ev.FZ * part.beta1 + ev.FW * part.beta2));
      return 0;
    });
  }
  return out;
}

std::vector<BorderColumns> h_border_columns(const HamiltonianModel& model, const StagePartition& part,
                                            const std::vector<Vec>& y, const std::vector<Mat>& Z, double /*h*/) {
  if (y.size() < Z.size()) throw DomainError("h_border_columns: too few nodes");
  std::vector<BorderColumns> out(Z.size());
  for (size_t i = 0; i < Z.size(); ++i) {
    at_interval(int(i), [&] {
      const IntervalEval ev = eval_interval(model, part, y[i], Z[i]);
      const Mat w = -(ev.FZ * part.B1.transpose() + ev.FW * part.B2.transpose());
      out[i].w = Eigen::Map<const Vec>(w.data(), w.size());
      out[i].v = -(ev.FZ * part.beta1 + ev.FW * part.beta2);
      return 0;
    });
  }
  return out;
}

namespace {

// Boundary rows (Jacobian and residual) in assembled order.
Head head_rows(const HamiltonianModel& model, const BoundarySpec& spec, const MeshSolution& mesh, bool jacobian) {
  const Vec& y0 = mesh.y.front();
  const Vec& yn = mesh.y.back();
  Head hd;
  if (const auto* sp = std::get_if<Separated>(&spec)) {
    hd.value = sp->ga(y0);
    if (jacobian) hd.B = sp->ga_jacobian(y0);
  } else if (const auto* ns = std::get_if<NonSeparated>(&spec)) {
    hd.value = ns->g(y0, yn);
    if (jacobian) {
      hd.B = ns->g_y0(y0, yn);
      hd.Bn = ns->g_yn(y0, yn);
    }
  } else if (const auto* pa = std::get_if<PeriodicAnchored>(&spec)) {
    hd.value = pa->Ba * y0 - pa->b0;
    hd.B = pa->Ba;
  } else {
    const auto& pe = std::get<PeriodicEnergy>(spec);
    hd.value.resize(1 + pe.b0.size());
    hd.value[0] = model.energy(y0) - pe.H_target;
    hd.value.tail(pe.b0.size()) = pe.Ba * y0 - pe.b0;
    if (jacobian) {
      hd.B.resize(1 + pe.Ba.rows(), y0.size());
      hd.B.row(0) = model.gradient(y0).transpose();
      hd.B.bottomRows(pe.Ba.rows()) = pe.Ba;
    }
  }
  return hd;
}

std::vector<Vec> nodes_for_residual(const BoundarySpec& spec, const MeshSolution& mesh) {
  std::vector<Vec> y = mesh.y;
  if (is_periodic(spec)) y.back() = y.front();
  return y;
}

void validate_spec(const HamiltonianModel& model, const BoundarySpec& spec, const MeshSolution& mesh) {
  const int d = model.dim();
  auto anchors = [&](const Mat& Ba, const Vec& b0) {
    if (Ba.rows() != b0.size() || (Ba.rows() > 0 && Ba.cols() != d)) throw DomainError("anchor rows must be r x 2m");
    if (Ba.rows() < 1 || Ba.rows() > d) throw DomainError("anchor count must be within 1..2m");
  };
  if (const auto* pa = std::get_if<PeriodicAnchored>(&spec)) anchors(pa->Ba, pa->b0);
  if (const auto* pe = std::get_if<PeriodicEnergy>(&spec)) anchors(pe->Ba, pe->b0);
  if (const auto* sp = std::get_if<Separated>(&spec)) {
    if (!sp->ga || !sp->gb || !sp->ga_jacobian || !sp->gb_jacobian) {
      throw DomainError("separated boundary conditions need functions and Jacobians");
    }
    const auto r = sp->ga(mesh.y.front()).size();
    if (r + sp->gb(mesh.y.back()).size() != d) throw DomainError("separated conditions must total 2m");
  }
  if (const auto* ns = std::get_if<NonSeparated>(&spec)) {
    if (!ns->g || !ns->g_y0 || !ns->g_yn) throw DomainError("non-separated conditions need g and both Jacobians");
  }
}

}  // namespace

Vec global_residual(const HamiltonianModel& model, const StagePartition& part, const BoundarySpec& spec,
                    const MeshSolution& mesh) {
  check_mesh(model, part, mesh);
  const int d = model.dim(), q = d * part.s, n = mesh.n();
  const Head hd = head_rows(model, spec, mesh, false);
  Vec tail;
  if (const auto* sp = std::get_if<Separated>(&spec)) {
    tail = sp->gb(mesh.y.back());
  }
  const auto rhs = residuals(model, part, nodes_for_residual(spec, mesh), mesh.Z, mesh.h);
  Vec F(hd.value.size() + n * (q + d) + tail.size());
  F.head(hd.value.size()) = hd.value;
  for (int i = 0; i < n; ++i) {
    const Eigen::Index row = hd.value.size() + i * (q + d);
    F.segment(row, q) = -rhs[i].stage;
    F.segment(row + q, d) = -rhs[i].step;
  }
  F.tail(tail.size()) = tail;
  return F;
}

BlockSystem newton_system(const HamiltonianModel& model, const StagePartition& part, const BoundarySpec& spec,
                          const MeshSolution& mesh, JacobianMode mode) {
  check_mesh(model, part, mesh);
  validate_spec(model, spec, mesh);
  const int n = mesh.n();
  const std::vector<Vec> y = nodes_for_residual(spec, mesh);
  const auto rhs = residuals(model, part, y, mesh.Z, mesh.h);
  std::vector<BorderColumns> border;
  if (has_h_unknown(spec)) border = h_border_columns(model, part, y, mesh.Z, mesh.h);

  BlockSystem sys;
  sys.dim = model.dim();
  sys.stages = part.s;
  sys.intervals.resize(n);
  for (int i = 0; i < n; ++i) {
    IntervalBlocks& b = sys.intervals[i];
    b = at_interval(i, [&] {
      return mode == JacobianMode::Midpoint ? assemble_interval_blocks(model, part, y[i], y[i + 1], mesh.h)
                                            : exact_interval_blocks(model, part, y[i], mesh.Z[i], mesh.h);
    });
    b.stage_rhs = rhs[i].stage;
    b.step_rhs = rhs[i].step;
    if (!border.empty()) {
      b.w = border[i].w;
      b.v = border[i].v;
    }
  }

  const Head hd = head_rows(model, spec, mesh, true);
  if (const auto* sp = std::get_if<Separated>(&spec)) {
    sys.boundary = SeparatedRows{hd.B, -hd.value, sp->gb_jacobian(mesh.y.back()), -sp->gb(mesh.y.back())};
  } else if (std::holds_alternative<NonSeparated>(spec)) {
    sys.boundary = CoupledRows{hd.B, hd.Bn, -hd.value};
  } else if (std::holds_alternative<PeriodicAnchored>(spec)) {
    sys.boundary = PeriodicRows{hd.B, -hd.value, std::nullopt, 0.0};
  } else {
    const Eigen::Index r = hd.B.rows() - 1;
    sys.boundary = PeriodicRows{hd.B.bottomRows(r), -hd.value.tail(r), RowVec(hd.B.row(0)), -hd.value[0]};
  }
  return sys;
}

Vec pack_unknowns(const BoundarySpec& spec, const MeshSolution& mesh) {
  const Eigen::Index d = mesh.y.front().size(), q = mesh.Z.front().size();
  const int n = mesh.n();
  const bool periodic = is_periodic(spec);
  Vec x(n * (d + q) + (periodic ? (has_h_unknown(spec) ? 1 : 0) : d));
  for (int i = 0; i < n; ++i) {
    x.segment(i * (d + q), d) = mesh.y[i];
    x.segment(i * (d + q) + d, q) = Eigen::Map<const Vec>(mesh.Z[i].data(), q);
  }
  if (!periodic) x.tail(d) = mesh.y.back();
  if (has_h_unknown(spec)) x[x.size() - 1] = mesh.h;
  return x;
}

MeshSolution apply_update(const BoundarySpec& spec, const MeshSolution& mesh, const Vec& x, double lambda) {
  const Eigen::Index d = mesh.y.front().size(), q = mesh.Z.front().size();
  const int n = mesh.n();
  const bool periodic = is_periodic(spec);
  if (x.size() != n * (d + q) + (periodic ? (has_h_unknown(spec) ? 1 : 0) : d)) {
    throw DomainError("apply_update: update has the wrong length");
  }
  MeshSolution out = mesh;
  for (int i = 0; i < n; ++i) {
    out.y[i] += lambda * x.segment(i * (d + q), d);
    out.Z[i] += lambda * Eigen::Map<const Mat>(x.data() + i * (d + q) + d, d, mesh.Z[i].cols());
  }
  if (periodic) {
    out.y.back() = out.y.front();
  } else {
    out.y.back() += lambda * x.tail(d);
  }
  if (has_h_unknown(spec)) out.h += lambda * x[x.size() - 1];
  return out;
}

MeshSolution newton_solve(const HamiltonianModel& model, const StagePartition& part, const BoundarySpec& spec,
                          const MeshSolution& mesh0, const NewtonOptions& opts) {
  check_mesh(model, part, mesh0);
  validate_spec(model, spec, mesh0);
  const bool periodic = is_periodic(spec);

  MeshSolution cur = mesh0;
  if (periodic) cur.y.back() = cur.y.front();
  cur.report = NewtonReport{};
  NewtonReport rep;

  Vec F = global_residual(model, part, spec, cur);
  double fnorm = F.norm();
  MeshSolution best = cur;
  best.report.final_residual = F.lpNorm<Eigen::Infinity>();
  int growth = 0;

  auto fail = [&](const std::string& why) -> NewtonFailure {
    best.report = rep;
    best.report.final_residual = best.report.residual_history.empty() ? F.lpNorm<Eigen::Infinity>()
                                                                     : *std::min_element(
                                                                           best.report.residual_history.begin(),
                                                                           best.report.residual_history.end());
    best.report.converged = false;
    return NewtonFailure("newton_solve: " + why, best);
  };

  for (int iter = 0;; ++iter) {
    const double finf = F.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(finf)) throw fail("non-finite residual");
    rep.residual_history.push_back(finf);
    if (finf <= *std::min_element(rep.residual_history.begin(), rep.residual_history.end())) {
      best.y = cur.y;
      best.Z = cur.Z;
      best.h = cur.h;
    }
    if (iter >= opts.max_iters) throw fail("no convergence in " + std::to_string(opts.max_iters) + " iterations");

    const BlockSystem sys = newton_system(model, part, spec, cur, opts.jacobian);
    std::optional<StructuredFactorization> fac;
    StructuredFactorization::Solution sol;
    try {
      fac.emplace(factor_structured(sys));
      rep.condition_estimates.push_back(fac->condition_estimate());
      sol = fac->solve(sys.rhs());
    } catch (const SingularSystemError& e) {
      throw fail(std::string("singular Newton system: ") + e.what());
    }
    const double step = sol.x.lpNorm<Eigen::Infinity>();
    rep.step_history.push_back(step);
    rep.lsq_residual = sol.residual_norm;
    rep.iterations = iter + 1;

    // What the linear model can still remove from the residual.
    const double reducible = periodic ? std::max(0.0, fnorm - sol.residual_norm) : finf;
    if (step < opts.tol && reducible < opts.tol) {
      cur = apply_update(spec, cur, sol.x);
      F = global_residual(model, part, spec, cur);
      rep.final_residual = F.lpNorm<Eigen::Infinity>();
      rep.converged = true;
      cur.report = rep;
      return cur;
    }

    // Natural monotonicity test: the simplified correction at the trial point,
    // solved with the current factorization, must be shorter than the step.
    // Scale-free in the residual rows, unlike a test on |F|.
    const double dx = sol.x.norm();
    double lambda = 1.0;
    bool monotone = false, admissible = false;
    MeshSolution next;
    Vec Fnext;
    for (int halving = 0; halving <= opts.max_halvings; ++halving, lambda *= 0.5) {
      MeshSolution trial = apply_update(spec, cur, sol.x, lambda);
      Vec Ft;
      try {
        Ft = global_residual(model, part, spec, trial);
      } catch (const DomainError&) {
        continue;
      }
      if (!Ft.allFinite()) continue;
      const double dx_bar = fac->solve(-Ft).x.norm();
      next = std::move(trial);
      Fnext = std::move(Ft);
      admissible = true;
      if (dx_bar <= (1.0 - lambda / 4.0) * dx) {
        monotone = true;
        break;
      }
    }
    if (lambda < 1.0) ++rep.damping_events;
    if (!admissible) throw fail("every damped update left the model domain");
    growth = monotone ? 0 : growth + 1;
    if (growth >= opts.divergence_limit) {
      throw fail("monotonicity test failed on " + std::to_string(growth) + " consecutive iterations");
    }
    cur = std::move(next);
    F = std::move(Fnext);
    fnorm = F.norm();
  }
}

}  // namespace hbvm
