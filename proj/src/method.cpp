#include "hbvm/method.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hbvm {

HbvmTableau build_tableau(int k, int s) {
  if (s < 1 || s > k) {
    throw DomainError("build_tableau: need 1 <= s <= k, got k=" + std::to_string(k) + ", s=" + std::to_string(s));
  }
  const QuadratureRule rule = gauss_legendre_rule(k);
  const BasisMatrices basis = basis_matrices(rule, s);
  return HbvmTableau{k, s, basis.I * basis.P.transpose() * basis.Omega, rule.weights, rule.nodes};
}

namespace {

// Minimax assignment of increasing node indices to increasing targets.
std::vector<int> choose_uniform_nodes(const Vec& nodes, int s) {
  const int k = static_cast<int>(nodes.size());
  const double inf = std::numeric_limits<double>::infinity();
  auto deviation = [&](int i, int j) { return std::abs(nodes[j] - (2.0 * i + 1.0) / (2.0 * s)); };

  // best[i][j]: optimal max deviation of targets i..s-1 when target i takes node j.
  std::vector<std::vector<double>> best(s, std::vector<double>(k, inf));
  for (int j = s - 1; j < k; ++j) best[s - 1][j] = deviation(s - 1, j);
  for (int i = s - 2; i >= 0; --i) {
    double tail = inf;  // min over j' > j of best[i+1][j']
    for (int j = k - s + i; j >= i; --j) {
      tail = std::min(tail, best[i + 1][j + 1]);
      best[i][j] = std::max(deviation(i, j), tail);
    }
  }
  const double optimum = *std::min_element(best[0].begin(), best[0].end());

  std::vector<int> chosen;
  int prev = -1;
  for (int i = 0; i < s; ++i) {
    for (int j = prev + 1; j < k; ++j) {
      if (best[i][j] <= optimum) {
        chosen.push_back(j);
        prev = j;
        break;
      }
    }
  }
  return chosen;
}

}  // namespace

StagePartition select_fundamental(const QuadratureRule& rule, int s) {
  const int k = rule.size();
  if (s < 1 || s > k) {
    throw DomainError("select_fundamental: need 1 <= s <= k, got k=" + std::to_string(k) + ", s=" + std::to_string(s));
  }
  const BasisMatrices basis = basis_matrices(rule, s);
  const Mat A = basis.I * basis.P.transpose() * basis.Omega;

  StagePartition part;
  part.k = k;
  part.s = s;
  part.fundamental_idx = choose_uniform_nodes(rule.nodes, s);
  for (int i = 0, f = 0; i < k; ++i) {
    if (f < s && part.fundamental_idx[f] == i) {
      ++f;
    } else {
      part.silent_idx.push_back(i);
    }
  }
  const int silent = k - s;
  part.c_fundamental = rule.nodes(part.fundamental_idx);
  part.c_silent = rule.nodes(part.silent_idx);
  part.a0.resize(silent);
  part.A_map.resize(silent, s);
  for (int j = 0; j < silent; ++j) {
    auto [w0, wf] = collocation_weights(part, part.c_silent[j]);
    part.a0[j] = w0;
    part.A_map.row(j) = wf.transpose();
  }
  part.B1 = A(part.fundamental_idx, part.fundamental_idx);
  part.B2 = A(part.fundamental_idx, part.silent_idx);
  part.beta1 = rule.weights(part.fundamental_idx);
  part.beta2 = rule.weights(part.silent_idx);
  return part;
}

StagePartition make_partition(int k, int s) { return select_fundamental(gauss_legendre_rule(k), s); }

std::pair<double, Vec> collocation_weights(const StagePartition& part, double c) {
  const int s = part.s;
  Vec x(s + 1);
  x[0] = 0.0;
  x.tail(s) = part.c_fundamental;
  Vec w(s + 1);
  for (int a = 0; a <= s; ++a) {
    double l = 1.0;
    for (int b = 0; b <= s; ++b) {
      if (b != a) l *= (c - x[b]) / (x[a] - x[b]);
    }
    w[a] = l;
  }
  return {w[0], w.tail(s)};
}

namespace {

struct StageState {
  Mat W;
  Mat FZ;  // J grad H at fundamental stages
  Mat FW;  // J grad H at silent stages
  Mat residual;
};

StageState evaluate_stages(const HamiltonianModel& model, const Vec& y0, const Mat& Z, double h,
                           const StagePartition& part) {
  StageState st;
  const Eigen::Index n = y0.size();
  st.W = y0 * part.a0.transpose() + Z * part.A_map.transpose();
  st.FZ.resize(n, part.s);
  st.FW.resize(n, part.k - part.s);
  for (int l = 0; l < part.s; ++l) st.FZ.col(l) = model.vector_field(Z.col(l));
  for (int j = 0; j < part.k - part.s; ++j) st.FW.col(j) = model.vector_field(st.W.col(j));
  st.residual = Z - y0.replicate(1, part.s) - h * (st.FZ * part.B1.transpose() + st.FW * part.B2.transpose());
  return st;
}

}  // namespace

StepResult hbvm_step(const HamiltonianModel& model, const Vec& y0, double h, const StagePartition& part,
                     const StepOptions& opts) {
  const int n = model.dim();
  if (y0.size() != n) throw DomainError("hbvm_step: state dimension does not match the model");
  if (!(std::isfinite(h) && h != 0.0)) throw DomainError("hbvm_step: stepsize must be finite and nonzero");

  const int s = part.s;
  const int silent = part.k - s;
  const double scale = 1.0 + y0.lpNorm<Eigen::Infinity>();
  const double floor = 1e3 * std::numeric_limits<double>::epsilon();

  Mat Z = y0.replicate(1, s);
  StageState st = evaluate_stages(model, y0, Z, h, part);
  double res = st.residual.lpNorm<Eigen::Infinity>() / scale;
  int iter = 0;
  for (; res > opts.tol; ++iter) {
    if (iter >= opts.max_iters) {
      throw ConvergenceError("hbvm_step: stage Newton did not converge in " + std::to_string(opts.max_iters) +
                                 " iterations",
                             iter, res);
    }
    std::vector<Mat> jhz(s), jhw(silent);
    for (int l = 0; l < s; ++l) jhz[l] = apply_j(model.hessian(Z.col(l)));
    for (int j = 0; j < silent; ++j) jhw[j] = apply_j(model.hessian(st.W.col(j)));

    Mat jac = Mat::Identity(n * s, n * s);
    for (int i = 0; i < s; ++i) {
      for (int l = 0; l < s; ++l) {
        Mat block = part.B1(i, l) * jhz[l];
        for (int j = 0; j < silent; ++j) block += part.B2(i, j) * part.A_map(j, l) * jhw[j];
        jac.block(i * n, l * n, n, n) -= h * block;
      }
    }
    const Vec rhs = -Eigen::Map<const Vec>(st.residual.data(), n * s);
    const Vec delta = jac.partialPivLu().solve(rhs);
    const Mat dZ = Eigen::Map<const Mat>(delta.data(), n, s);

    double lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= opts.max_halvings; ++halving, lambda *= 0.5) {
      const Mat trial = Z + lambda * dZ;
      StageState trial_state;
      try {
        trial_state = evaluate_stages(model, y0, trial, h, part);
      } catch (const DomainError&) {
        continue;
      }
      const double trial_res = trial_state.residual.lpNorm<Eigen::Infinity>() / scale;
      if (trial_res < res) {
        Z = trial;
        st = std::move(trial_state);
        res = trial_res;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (res <= floor) break;  // residual is at rounding level
      throw ConvergenceError("hbvm_step: stage Newton diverged (no decrease after damping)", iter, res);
    }
  }

  StepResult out;
  out.y1 = y0 + h * (st.FZ * part.beta1 + st.FW * part.beta2);
  out.Z = std::move(Z);
  out.W = std::move(st.W);
  out.newton_iters = iter;
  out.residual_norm = res;
  return out;
}

Vec dense_output(const StagePartition& part, const Vec& y0, const Mat& Z, double /*h*/, double c) {
  if (Z.cols() != part.s || Z.rows() != y0.size()) throw DomainError("dense_output: stage shape mismatch");
  auto [w0, wf] = collocation_weights(part, c);
  return w0 * y0 + Z * wf;
}

std::vector<double> energy_drift(const HamiltonianModel& model, const std::vector<Vec>& trajectory) {
  if (trajectory.empty()) throw DomainError("energy_drift: empty trajectory");
  const double h0 = model.energy(trajectory.front());
  std::vector<double> out;
  out.reserve(trajectory.size());
  for (const auto& y : trajectory) out.push_back(model.energy(y) - h0);
  return out;
}

std::vector<Vec> integrate(const HamiltonianModel& model, const Vec& y0, double h, int steps,
                           const StagePartition& part, const StepOptions& opts) {
  std::vector<Vec> traj;
  traj.reserve(steps + 1);
  traj.push_back(y0);
  for (int i = 0; i < steps; ++i) traj.push_back(hbvm_step(model, traj.back(), h, part, opts).y1);
  return traj;
}

}  // namespace hbvm
