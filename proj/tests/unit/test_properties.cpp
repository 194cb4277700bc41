#include <gtest/gtest.h>

#include <random>

#include "../common/invariants.hpp"
#include "peakopt/direct/solver.hpp"

using namespace peakopt;

TEST(Properties, ZNeverDecreases) { EXPECT_EQ(invariants::z_monotonicity_failures(400, 1), 0); }

TEST(Properties, MixedConstraintImpliesPure) { EXPECT_EQ(invariants::mixed_implies_pure_failures(400, 2), 0); }

TEST(Properties, SoftplusGapBound) { EXPECT_EQ(invariants::softplus_gap_failures({1.0, 50.0, 5000.0}), 0); }

TEST(Properties, OmegaCalibrationExact) { EXPECT_LT(invariants::calibration_error(invariants::calibration_epsilons()), 1e-9); }

TEST(Properties, EnvelopeIsCumulativeMax) { EXPECT_EQ(invariants::envelope_failures(400, 3), 0); }

TEST(Properties, SmoothedGrowthBounded) {
  // 1 - v omega(z - y) stays in [0, 1]: the smoothed growth is nonnegative and
  // at most softplus(g).
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double eps : invariants::calibration_epsilons()) {
    const auto p = params_from_epsilon(eps, 200.0);
    for (int i = 0; i < 500; ++i) {
      const double g = 4.0 * unit(rng) - 2.0;
      const double gap = 0.2 * unit(rng) - 0.1;
      const double v = unit(rng);
      const double rate = peak_growth_theta(g, 0.0, gap, v, p);
      EXPECT_GE(rate, 0.0);
      EXPECT_LE(rate, softplus(g, p.lambda1) + 1e-15);
    }
  }
}

TEST(Properties, FeasibleP1ObjectiveBoundsPeak) {
  // Any P1-feasible decision has z(T) >= max y over the nodes.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto tp = direct::transcribe(make_toy(), ReformulationKind::p1(), 30);
  int feasible = 0;
  for (int s = 0; s < 200; ++s) {
    Eigen::VectorXd w(tp.decision_dim());
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = tp.lower()[i] + (tp.upper()[i] - tp.lower()[i]) * unit(rng);
    for (int k = 30; k < 60; ++k) w[k] = unit(rng) < 0.7 ? 0.0 : w[k];
    const auto ev = tp.evaluate(w);
    if (ev.violation() > 0.0) continue;
    ++feasible;
    double top = -1e300;
    for (const Vec& X : ev.nodes.states) top = std::max(top, X[1]);
    EXPECT_GE(ev.objective, top - 1e-12);
  }
  EXPECT_GT(feasible, 0);
}

TEST(Properties, BracketOrderOnRandomReports) {
  // Lower-bound objectives below every upper-bound peak never raise.
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < 100; ++s) {
    std::vector<direct::SolveReport> lows(3), ups(3);
    for (auto& r : ups) {
      r.bound_role = direct::BoundRole::upper;
      r.peak = 1.0 + unit(rng);
    }
    for (auto& r : lows) {
      r.bound_role = direct::BoundRole::lower;
      r.objective = unit(rng);
    }
    const auto b = direct::bracket(lows, ups);
    EXPECT_LE(b.lower, b.upper);
  }
}
