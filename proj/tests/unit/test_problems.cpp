#include <gtest/gtest.h>

#include "peakopt/problems.hpp"

using namespace peakopt;

TEST(Problems, ToyDefinition) {
  const auto toy = make_toy();
  EXPECT_EQ(toy.state_dim, 1);
  EXPECT_EQ(toy.control_dim(), 1);
  EXPECT_DOUBLE_EQ(toy.horizon, 5.0);
  EXPECT_FALSE(toy.budget.has_value());
  for (double x : {1.0, 2.0, 4.0}) EXPECT_DOUBLE_EQ(toy_cubic(x), 0.0);
  EXPECT_DOUBLE_EQ(toy_cubic(0.0), 8.0);
  EXPECT_DOUBLE_EQ(make_toy(7.0).horizon, 7.0);
}

TEST(Problems, SirDefaults) {
  const SirParameters prm;
  EXPECT_DOUBLE_EQ(prm.r0(), 3.0);
  const auto sir = make_sir(prm);
  EXPECT_DOUBLE_EQ(sir.control_box.upper(0), 0.5);
  EXPECT_DOUBLE_EQ(*sir.budget, 28.0);
  EXPECT_DOUBLE_EQ(sir.x0[0] + sir.y0, 1.0);
}

TEST(Problems, SirRejectsInvalidParameters) {
  SirParameters prm;
  prm.u_max = 1.0;
  EXPECT_THROW(make_sir(prm), ConfigurationError);
  prm = {};
  prm.beta = 0.0;
  EXPECT_THROW(make_sir(prm), ConfigurationError);
  prm = {};
  prm.s0 = 0.9;
  prm.i0 = 0.2;
  EXPECT_THROW(make_sir(prm), ConfigurationError);
  prm = {};
  prm.budget = -1.0;
  EXPECT_THROW(make_sir(prm), ConfigurationError);
}

TEST(Problems, SirConservesPopulationWithoutRecoveredState) {
  // S + I + R = 1 with R' = gamma I, so S + I decreases at rate gamma I.
  const auto sir = make_sir();
  const Derivative d = evaluate_rhs(sir, make_vec({0.6}), 0.1, make_vec({0.3}));
  EXPECT_NEAR(d.dx[0] + d.dy, -0.07 * 0.1, 1e-15);
}
