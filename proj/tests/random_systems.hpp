#pragma once

#include "hbvm/structured_linalg.hpp"

#include <random>

namespace hbvm::testing {

enum class Layout { Separated, Coupled, Periodic };

// Blocks near the shape of a small-h Newton system (K ~ I, L ~ -I) plus
// random perturbations, which keeps the assembled matrix well conditioned.
inline BlockSystem random_block_system(Layout layout, int m, int s, int n, std::mt19937& rng, int anchors = 1,
                                       bool energy_row = false, bool bordered = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rnd = [&](int r, int c, double scale) {
    Mat a(r, c);
    for (Eigen::Index j = 0; j < a.size(); ++j) a.data()[j] = scale * u(rng);
    return a;
  };
  auto rvec = [&](int r) -> Vec { return rnd(r, 1, 1.0); };
  const int d = 2 * m, q = 2 * m * s;
  BlockSystem sys;
  sys.dim = d;
  sys.stages = s;
  for (int i = 0; i < n; ++i) {
    IntervalBlocks iv;
    iv.V = Mat(q, d);
    for (int l = 0; l < s; ++l) iv.V.middleRows(l * d, d) = -Mat::Identity(d, d) + rnd(d, d, 0.3);
    iv.K = Mat::Identity(q, q) + rnd(q, q, 0.3);
    iv.L = -Mat::Identity(d, d) + rnd(d, d, 0.3);
    iv.UT = rnd(d, q, 0.3);
    iv.stage_rhs = rvec(q);
    iv.step_rhs = rvec(d);
    if (bordered && layout == Layout::Periodic) {
      iv.w = rvec(q);
      iv.v = rvec(d);
    }
    sys.intervals.push_back(std::move(iv));
  }
  switch (layout) {
    case Layout::Separated: {
      std::uniform_int_distribution<int> pick(0, d);
      const int r = pick(rng);
      sys.boundary = SeparatedRows{rnd(r, d, 1.0) + Mat::Identity(r, d), rvec(r),
                                   rnd(d - r, d, 1.0) + Mat::Identity(d, d).bottomRows(d - r), rvec(d - r)};
      break;
    }
    case Layout::Coupled:
      sys.boundary = CoupledRows{Mat::Identity(d, d) + rnd(d, d, 0.3), -Mat::Identity(d, d) + rnd(d, d, 0.3), rvec(d)};
      break;
    case Layout::Periodic: {
      PeriodicRows p{rnd(anchors, d, 1.0), rvec(anchors), std::nullopt, u(rng)};
      if (energy_row) p.BH = RowVec(rnd(1, d, 1.0));
      sys.boundary = p;
      break;
    }
  }
  return sys;
}

}  // namespace hbvm::testing
