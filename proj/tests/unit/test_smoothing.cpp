#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "peakopt/smoothing.hpp"

using namespace peakopt;

TEST(Smoothing, SoftplusNoOverflow) {
  EXPECT_DOUBLE_EQ(softplus(1e3, 5000.0), 1e3);
  EXPECT_EQ(softplus(-1e3, 5000.0), 0.0);
  EXPECT_TRUE(std::isfinite(softplus(1e300, 1.0)));
}

TEST(Smoothing, SoftplusAtZero) {
  EXPECT_NEAR(softplus(0.0, 100.0), std::numbers::ln2 / 100.0, 1e-16);
  EXPECT_DOUBLE_EQ(softplus_slope(0.0, 7.0), 0.5);
}

TEST(Smoothing, SlopesMatchDifferences) {
  const double lambda = 50.0;
  const double alpha = 0.3;
  const double lambda2 = 40.0;
  for (double xi : {-0.1, -0.01, 0.0, 0.02, 0.2}) {
    const double h = 1e-7;
    EXPECT_NEAR(softplus_slope(xi, lambda), (softplus(xi + h, lambda) - softplus(xi - h, lambda)) / (2 * h), 1e-6);
    EXPECT_NEAR(omega_slope(xi, alpha, lambda2),
                (omega(xi + h, alpha, lambda2) - omega(xi - h, alpha, lambda2)) / (2 * h), 1e-5);
  }
}

TEST(Smoothing, OmegaIsIncreasingIndicator) {
  const auto prm = params_from_epsilon(0.1);
  double previous = 0.0;
  for (double xi = -0.05; xi <= 0.05; xi += 1e-3) {
    const double w = omega(xi, prm.alpha, prm.lambda2);
    EXPECT_GE(w, previous);
    EXPECT_GT(w, 0.0);
    EXPECT_LE(w, 1.0);
    previous = w;
  }
  EXPECT_GT(omega(1.0, prm.alpha, prm.lambda2), 1.0 - 1e-12);
}

TEST(Smoothing, CalibrationFrozenValues) {
  // eps = 0.1: alpha = -log2(0.9), lambda2 = log(10^{1/alpha} - 1) / 0.01
  const auto prm = params_from_epsilon(0.1);
  EXPECT_NEAR(prm.alpha, 0.15200309344504997, 1e-15);
  EXPECT_NEAR(prm.lambda2, std::log(std::pow(10.0, 1.0 / prm.alpha) - 1.0) / 0.01, 1e-9);
  EXPECT_NEAR(prm.theta, prm.alpha * prm.lambda2, 1e-12);
  EXPECT_DOUBLE_EQ(prm.lambda1, 5000.0);
  EXPECT_NO_THROW(prm.validate());
}

TEST(Smoothing, CalibrationRejectsBadEpsilon) {
  EXPECT_THROW(params_from_epsilon(0.0), DomainError);
  EXPECT_THROW(params_from_epsilon(1.0), DomainError);
  EXPECT_THROW(params_from_epsilon(0.1, -1.0), DomainError);
  SmoothingParams bad = params_from_epsilon(0.1);
  bad.alpha *= 2.0;
  EXPECT_THROW(bad.validate(), DomainError);
}
