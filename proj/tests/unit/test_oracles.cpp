#include <gtest/gtest.h>

#include <cmath>

#include "peakopt/oracles.hpp"

using namespace peakopt;

TEST(Oracles, ToyReferencePeakFrozen) {
  // y(1) for u = -1 on [0, 1]: 0.5 * integral of the cubic = 0.5 * 4.5 = 2.25 exactly.
  const double reference = peak(toy_switched_trajectory());
  EXPECT_NEAR(reference, 2.25, 1e-9);
}

TEST(Oracles, ToyControlSigns) {
  EXPECT_EQ(toy_optimal_control(0.5), -1.0);
  EXPECT_EQ(toy_optimal_control(1.5), 1.0);
  EXPECT_EQ(toy_optimal_control(3.0), -1.0);
  EXPECT_EQ(toy_optimal_control(4.5), 1.0);
  // right-continuous at the switch
  EXPECT_EQ(toy_optimal_control(1.0), 1.0);
  for (double t = 0.05; t < 5.0; t += 0.1)
    EXPECT_EQ(toy_optimal_control(t), -std::copysign(1.0, toy_cubic(t)));
}

TEST(Oracles, SensitivityFrozen) {
  const std::vector<double> deltas{1e-4, 1e-3};
  const auto rows = perturb_switch_times(deltas);
  // delaying the first switch by delta keeps y' = 0.5 * cubic near its root: the peak moves by O(delta^2)
  EXPECT_NEAR(rows[0].peak, 2.25, 1e-6);
  EXPECT_LT(rows[0].relative_error, 5e-4);
  EXPECT_NEAR(rows[1].peak, 2.2500055, 2e-6);
}

TEST(Oracles, UniformMeshAgreesWithSegments) {
  const auto toy = make_toy();
  const auto sig = ControlSignal::sample(5.0, 5000, 1, [](double t) { return make_vec({toy_optimal_control(t)}); });
  EXPECT_NEAR(peak(integrate(toy, sig)), 2.25, 1e-6);
}

TEST(Oracles, RunningMaxEnvelope) {
  const std::vector<double> y{0.0, 2.0, 1.0, 3.0, -1.0, 3.0};
  const auto z = running_max_envelope(y);
  EXPECT_EQ(z, (std::vector<double>{0.0, 2.0, 2.0, 3.0, 3.0, 3.0}));
  const auto gaps = invisible_intervals(y);
  ASSERT_EQ(gaps.size(), 2u);
  EXPECT_EQ(gaps[0], (std::pair<std::size_t, std::size_t>{1, 3}));
  EXPECT_EQ(gaps[1], (std::pair<std::size_t, std::size_t>{3, 5}));
  EXPECT_THROW(running_max_envelope(std::vector<double>{}), DomainError);
}

TEST(Oracles, SampleControlsLowestFirst) {
  const auto s = sample_controls(ControlBox({0.0, -1.0}, {1.0, 1.0}), 3);
  ASSERT_EQ(s.size(), 9u);
  EXPECT_DOUBLE_EQ(s[0][0], 0.0);
  EXPECT_DOUBLE_EQ(s[0][1], -1.0);
  EXPECT_DOUBLE_EQ(s[8][0], 1.0);
  EXPECT_DOUBLE_EQ(s[8][1], 1.0);
  EXPECT_THROW(sample_controls(ControlBox({0.0}, {1.0}), 0), ConfigurationError);
}

TEST(Oracles, ExactFeedbackOnParticularClass) {
  const auto toy = make_toy();
  const auto samples = sample_controls(toy.control_box, 5);
  for (double x = 0.05; x < 5.0; x += 0.1) {
    const Vec u = exact_feedback_particular(toy, make_vec({x}), samples);
    EXPECT_DOUBLE_EQ(u[0], toy_optimal_control(x)) << x;
  }
  // on a root every sample ties; the lowest index wins
  EXPECT_DOUBLE_EQ(exact_feedback_particular(toy, make_vec({2.0}), samples)[0], -1.0);
  EXPECT_THROW(exact_feedback_particular(make_sir(), make_vec({0.9}), sample_controls(make_sir().control_box, 3)),
               ClassViolation);
}

TEST(Oracles, UncontrolledSirClosedForm) {
  const SirParameters prm;
  const double closed = sir_uncontrolled_peak(prm);
  EXPECT_NEAR(closed, 0.300462904, 1e-9);
  SirParameters none = prm;
  none.budget = 0.0;
  const auto traj = integrate(make_sir(none), ControlSignal::constant(300.0, 30000, make_vec({0.0})));
  EXPECT_NEAR(peak(traj), closed, 2e-4 * closed);
}

TEST(Oracles, HeldPeakFrozen) {
  const SirParameters prm;
  const auto held = sir_held_peak(prm);
  EXPECT_NEAR(held.peak, 0.101507738, 1e-8);
  EXPECT_NEAR(held.u_start, 0.603468, 1e-5);
  EXPECT_FALSE(held.admissible);
  SirParameters wide = prm;
  wide.u_max = 0.7;
  EXPECT_TRUE(sir_held_peak(wide).admissible);
  SirParameters broke = prm;
  broke.budget = 0.0;
  EXPECT_NEAR(sir_held_peak(broke).peak, sir_uncontrolled_peak(prm), 1e-9);
}

TEST(Oracles, HeldPeakStrategyIsFeasibleWhenAdmissible) {
  SirParameters prm;
  prm.u_max = 0.7;
  const auto held = sir_held_peak(prm);
  const auto sir = make_sir(prm);
  // replay the hold: u = 1 - gamma / (beta S) while I >= I_h and S > 1/R0
  const int mesh = 30000;
  const double h = prm.horizon / mesh;
  BaseSystem sys(sir);
  Vec X = sys.initial();
  double used = 0.0;
  double top = X[1];
  for (int k = 0; k < mesh; ++k) {
    double u = 0.0;
    if (X[1] >= held.peak * (1.0 - 1e-9) && X[0] > 1.0 / prm.r0())
      u = std::clamp(1.0 - prm.gamma / (prm.beta * X[0]), 0.0, prm.u_max);
    used += h * u;
    X = step(sys, Scheme::rk4, X, make_vec({u}), h);
    top = std::max(top, X[1]);
  }
  EXPECT_LE(used, prm.budget + 0.05);
  EXPECT_NEAR(top, held.peak, 2e-3 * held.peak);
}

TEST(Oracles, BruteForceFindsKnownSwitching) {
  const auto toy = make_toy();
  // candidate instants k * 5 / 5 = 1, 2, 3, 4 include the optimal switches
  const auto res = brute_force_bang(toy, 3, 4, 100000, 1e-3);
  EXPECT_FALSE(res.partial);
  EXPECT_NEAR(res.best_peak, 2.25, 1e-6);
  EXPECT_DOUBLE_EQ(res.first_value, -1.0);
  ASSERT_FALSE(res.switch_times.empty());
  EXPECT_NEAR(res.switch_times.front(), 1.0, 1e-12);
}

TEST(Oracles, BruteForceRespectsLimits) {
  const auto res = brute_force_bang(make_toy(), 2, 9, 5);
  EXPECT_TRUE(res.partial);
  EXPECT_EQ(res.evaluated, 5);
  EXPECT_THROW(brute_force_bang(make_toy(), 7, 3), ConfigurationError);
}
