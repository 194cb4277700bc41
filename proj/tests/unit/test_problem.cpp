#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "peakopt/integrate.hpp"
#include "peakopt/problems.hpp"

using namespace peakopt;

TEST(ControlBox, RejectsInvalidBounds) {
  EXPECT_THROW(ControlBox({}, {}), ConfigurationError);
  EXPECT_THROW(ControlBox({1.0}, {0.0}), ConfigurationError);
  EXPECT_THROW(ControlBox({0.0, 0.0}, {1.0}), ConfigurationError);
  EXPECT_THROW(ControlBox({0.0}, {std::numeric_limits<double>::infinity()}), ConfigurationError);
}

TEST(ControlBox, ProjectAndContain) {
  const ControlBox box({-1.0, 0.0}, {1.0, 2.0});
  EXPECT_TRUE(box.contains(make_vec({0.5, 2.0})));
  EXPECT_FALSE(box.contains(make_vec({1.5, 0.0})));
  EXPECT_FALSE(box.contains(make_vec({0.0})));
  const Vec p = box.project(make_vec({3.0, -1.0}));
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], 0.0);
}

TEST(Rhs, ToyMatchesClosedForm) {
  const ProblemSpec toy = make_toy();
  // (1-0.5)(2-0.5)(4-0.5) = 2.625; with u = 1 scaled by 1.5
  const Derivative d = evaluate_rhs(toy, make_vec({0.5}), 0.0, make_vec({1.0}));
  EXPECT_DOUBLE_EQ(d.dx[0], 1.0);
  EXPECT_DOUBLE_EQ(d.dy, 2.625 * 1.5);
}

TEST(Rhs, SirMatchesClosedForm) {
  const ProblemSpec sir = make_sir();
  const Derivative d = evaluate_rhs(sir, make_vec({0.9}), 0.05, make_vec({0.2}));
  const double infection = 0.8 * 0.21 * 0.9 * 0.05;
  EXPECT_NEAR(d.dx[0], -infection, 1e-15);
  EXPECT_NEAR(d.dy, infection - 0.07 * 0.05, 1e-15);
}

TEST(Rhs, RejectsControlOutsideBox) {
  EXPECT_THROW(evaluate_rhs(make_toy(), make_vec({0.0}), 0.0, make_vec({2.0})), DomainError);
}

TEST(Rhs, NonFiniteIsReported) {
  ProblemSpec spec = make_toy();
  spec.rhs = [](const Vec&, double, const Vec&) {
    return Derivative{make_vec({1.0}), std::numeric_limits<double>::quiet_NaN()};
  };
  EXPECT_THROW(evaluate_rhs(spec, make_vec({0.0}), 0.0, make_vec({0.0})), DomainError);
}

TEST(Rhs, AnalyticJacobianMatchesDifferences) {
  for (const ProblemSpec& spec : {make_toy(), make_sir()}) {
    ProblemSpec numeric = spec;
    numeric.jacobian = nullptr;
    const Vec x = make_vec({0.7});
    const double y = 0.3;
    const Vec u = make_vec({0.25});
    const Mat a = rhs_jacobian(spec, x, y, u);
    const Mat n = rhs_jacobian(numeric, x, y, u);
    EXPECT_LT((a - n).cwiseAbs().maxCoeff(), 1e-7) << spec.name;
  }
}

TEST(Spec, ValidateCatchesBadFields) {
  ProblemSpec spec = make_toy();
  spec.horizon = -1.0;
  EXPECT_THROW(spec.validate(), ConfigurationError);
  spec = make_toy();
  spec.x0 = make_vec({0.0, 0.0});
  EXPECT_THROW(spec.validate(), ConfigurationError);
  spec = make_toy();
  spec.control_box = ControlBox({-1.0, -1.0}, {1.0, 1.0});
  spec.budget = 1.0;
  EXPECT_THROW(spec.validate(), UnsupportedError);
}

TEST(ControlSignal, SampleUsesMidpoints) {
  const auto sig = ControlSignal::sample(4.0, 4, 1, [](double t) { return make_vec({t}); });
  ASSERT_EQ(sig.mesh_size(), 4);
  EXPECT_DOUBLE_EQ(sig.value(0), 0.5);
  EXPECT_DOUBLE_EQ(sig.value(3), 3.5);
  EXPECT_THROW(ControlSignal(1.0, 2, {1.0, 2.0, 3.0}), ConfigurationError);
}

TEST(Integrate, ToyConstantControlExact) {
  // u = 0: y(t) = integral of the cubic, a quartic; RK4 is exact for it.
  const ProblemSpec toy = make_toy();
  const auto traj = integrate(toy, ControlSignal::constant(5.0, 50, make_vec({0.0})));
  const double T = 5.0;
  const double exact = 8.0 * T - 7.0 * T * T + 7.0 / 3.0 * T * T * T - 0.25 * T * T * T * T;
  EXPECT_NEAR(traj.y_values.back(), exact, 1e-12);
  EXPECT_EQ(traj.size(), 51u);
  EXPECT_DOUBLE_EQ(traj.times.back(), 5.0);
}

TEST(Integrate, DivergenceRaisesWithTime) {
  ProblemSpec blow = make_toy(2.0);
  blow.rhs = [](const Vec& x, double y, const Vec&) { return Derivative{make_vec({1.0}), y * y + x[0]}; };
  blow.jacobian = nullptr;
  blow.y0 = 1.0;
  try {
    integrate(blow, ControlSignal::constant(2.0, 400, make_vec({0.0})));
    FAIL() << "expected divergence";
  } catch (const IntegrationDiverged& e) {
    EXPECT_GT(e.time(), 0.5);
    EXPECT_LT(e.time(), 2.0);
  }
}

TEST(Integrate, RejectsMismatchedSignal) {
  EXPECT_THROW(integrate(make_toy(), ControlSignal::constant(4.0, 10, make_vec({0.0}))), ConfigurationError);
  EXPECT_THROW(integrate(make_toy(), ControlSignal::constant(5.0, 10, make_vec({1.5}))), DomainError);
}

TEST(Integrate, Deterministic) {
  const ProblemSpec sir = make_sir();
  const auto sig = ControlSignal::sample(300.0, 300, 1, [](double t) { return make_vec({t > 100 ? 0.4 : 0.0}); });
  const auto a = integrate(sir, sig);
  const auto b = integrate(sir, sig);
  ASSERT_EQ(a.y_values.size(), b.y_values.size());
  for (std::size_t i = 0; i < a.y_values.size(); ++i) ASSERT_EQ(a.y_values[i], b.y_values[i]);
}

namespace {
double sir_final_error(Scheme scheme, int mesh) {
  const ProblemSpec sir = make_sir();
  const auto sig = [&](int n) { return ControlSignal::constant(300.0, n, make_vec({0.2})); };
  const double reference = integrate(sir, sig(1), {Scheme::rk4, 20000}).y_values.back();
  return std::abs(integrate(sir, sig(mesh), {scheme, 1}).y_values.back() - reference);
}
}  // namespace

TEST(Integrate, ObservedOrders) {
  auto order = [](Scheme s, int n) { return std::log2(sir_final_error(s, n) / sir_final_error(s, 2 * n)); };
  EXPECT_NEAR(order(Scheme::rk4, 400), 4.0, 0.35);
  EXPECT_NEAR(order(Scheme::heun, 800), 2.0, 0.2);
  EXPECT_NEAR(order(Scheme::implicit_midpoint, 800), 2.0, 0.2);
}

TEST(Integrate, SegmentsMatchUniformMesh) {
  const ProblemSpec toy = make_toy();
  const auto uniform = integrate(toy, ControlSignal::constant(5.0, 500, make_vec({0.5})));
  const auto segs = integrate_segments(toy, {{0.0, 2.5, make_vec({0.5})}, {2.5, 5.0, make_vec({0.5})}}, 0.01);
  EXPECT_NEAR(segs.y_values.back(), uniform.y_values.back(), 1e-12);
}

TEST(Integrate, BudgetStateTracksUsage) {
  const ProblemSpec sir = make_sir();
  const auto sig = ControlSignal::sample(300.0, 300, 1, [](double t) { return make_vec({t < 60 ? 0.3 : 0.0}); });
  const auto traj = integrate(sir, sig);
  EXPECT_NEAR(budget_usage(sig), 18.0, 1e-12);
  EXPECT_NEAR(traj.budget_values.back(), 28.0 - 18.0, 1e-9);
}

TEST(Integrate, BudgetUsageNeedsScalarControl) {
  EXPECT_THROW(budget_usage(ControlSignal(1.0, 2, {0.0, 0.0})), UnsupportedError);
}

TEST(Integrate, SchemeNamesRoundTrip) {
  for (Scheme s : {Scheme::rk4, Scheme::heun, Scheme::implicit_midpoint})
    EXPECT_EQ(scheme_from_string(to_string(s)), s);
  EXPECT_THROW(scheme_from_string("euler"), ConfigurationError);
}
