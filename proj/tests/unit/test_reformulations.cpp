#include <gtest/gtest.h>

#include <cmath>

#include "peakopt/problems.hpp"
#include "peakopt/reformulations.hpp"

using namespace peakopt;

TEST(Reformulations, GrowthLaws) {
  EXPECT_DOUBLE_EQ(peak_growth_p1(2.0, 0.25), 1.5);
  EXPECT_DOUBLE_EQ(peak_growth_p1(-2.0, 0.0), 0.0);
  // indicator is 1 on z >= y, including equality
  EXPECT_DOUBLE_EQ(peak_growth_p3(2.0, 1.0, 1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(peak_growth_p3(2.0, 1.0, 0.999, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(peak_growth_theta_exact(2.0, 1.0, 1.0, 1.0, 3.0), 0.0);
}

TEST(Reformulations, ThetaExactNeverAboveP3) {
  for (double g : {-1.0, 0.0, 0.5, 3.0})
    for (double gap : {-0.5, -1e-3, 0.0, 0.2})
      for (double v : {0.0, 0.3, 1.0})
        EXPECT_LE(peak_growth_theta_exact(g, 1.0, 1.0 + gap, v, 50.0), peak_growth_p3(g, 1.0, 1.0 + gap, v) + 1e-15);
}

TEST(Reformulations, ConstraintForms) {
  const ExtendedState above{make_vec({0.0}), 1.0, 1.5, {}};
  const ExtendedState below{make_vec({0.0}), 1.0, 0.5, {}};
  EXPECT_DOUBLE_EQ(constraint_c(above), 0.5);
  EXPECT_DOUBLE_EQ(constraint_c(below), -0.5);
  // below the output only v = 0 is admissible
  EXPECT_DOUBLE_EQ(constraint_cm(below, 1.0), -0.5);
  EXPECT_DOUBLE_EQ(constraint_cm(below, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(constraint_cm(below, 0.5), -0.25);
  EXPECT_DOUBLE_EQ(constraint_cm(above, 0.3), 0.5);
}

TEST(Reformulations, RhsHelpersCarryBudget) {
  const ProblemSpec sir = make_sir();
  const ExtendedState s{make_vec({0.9}), 0.05, 0.05, 10.0};
  const auto d = rhs_p1(sir, s, make_vec({0.3}), 0.0);
  ASSERT_TRUE(d.dbudget.has_value());
  EXPECT_DOUBLE_EQ(*d.dbudget, -0.3);
  EXPECT_DOUBLE_EQ(d.dz, std::max(d.dy, 0.0));
  EXPECT_THROW(rhs_p3(sir, s, make_vec({0.3}), 1.5), DomainError);
  const auto t = rhs_p3theta(sir, s, make_vec({0.3}), 1.0, params_from_epsilon(0.1));
  EXPECT_LT(t.dz, softplus(t.dy, 5000.0));
}

TEST(Reformulations, ExtendedLayout) {
  const ExtendedSystem p1(make_sir(), ReformulationKind::p1());
  EXPECT_EQ(p1.state_dim(), 4);
  EXPECT_EQ(p1.control_dim(), 2);
  EXPECT_EQ(p1.z_index(), 2);
  EXPECT_EQ(p1.budget_index(), 3);
  const Vec X0 = p1.initial();
  EXPECT_DOUBLE_EQ(X0[p1.z_index()], X0[p1.y_index()]);
  EXPECT_DOUBLE_EQ(X0[p1.budget_index()], 28.0);

  const ExtendedSystem p0(make_toy(), ReformulationKind::p0());
  EXPECT_EQ(p0.state_dim(), 2);
  EXPECT_EQ(p0.control_dim(), 1);
  EXPECT_EQ(p0.z_index(), -1);

  const ExtendedState s{make_vec({0.2}), 0.1, 0.3, 5.0};
  const ExtendedState back = p1.unpack(p1.pack(s));
  EXPECT_DOUBLE_EQ(back.z, 0.3);
  EXPECT_DOUBLE_EQ(*back.budget, 5.0);
}

TEST(Reformulations, KindValidation) {
  EXPECT_THROW(ReformulationKind::lp(0).validate(), ConfigurationError);
  ReformulationKind k{Formulation::P3theta, {}, {}, {}};
  EXPECT_THROW(k.validate(), ConfigurationError);
  EXPECT_THROW(ReformulationKind::p1(-1.0).validate(), ConfigurationError);
  EXPECT_THROW(formulation_from_string("P9"), ConfigurationError);
  for (Formulation f : {Formulation::P0, Formulation::P1, Formulation::P2, Formulation::P3, Formulation::P3theta,
                        Formulation::Lp})
    EXPECT_EQ(formulation_from_string(to_string(f)), f);
  EXPECT_EQ(describe(ReformulationKind::lp(5)), "Lp(p=5)");
}

class JacobianCheck : public ::testing::TestWithParam<int> {};

TEST_P(JacobianCheck, MatchesCentralDifferences) {
  const std::vector<ReformulationKind> kinds{ReformulationKind::p1(), ReformulationKind::p2(200.0),
                                             ReformulationKind::p3theta(params_from_epsilon(0.1, 300.0)),
                                             ReformulationKind::p3theta(params_from_epsilon(0.2, 50.0))};
  const ReformulationKind kind = kinds[static_cast<std::size_t>(GetParam())];
  for (const ProblemSpec& spec : {make_toy(), make_sir()}) {
    const ExtendedSystem sys(spec, kind);
    Vec X = sys.initial();
    X[0] = spec.name == "toy" ? 0.6 : 0.8;
    X[sys.y_index()] = spec.name == "toy" ? 0.4 : 0.06;
    X[sys.z_index()] = X[sys.y_index()] - 0.01;
    const Vec W = make_vec({spec.name == "toy" ? 0.2 : 0.3, 0.4});
    const SystemJacobian jac = sys.jacobian(X, W);
    const double h = 1e-7;
    for (int j = 0; j < sys.state_dim(); ++j) {
      Vec a = X, b = X;
      a[j] += h;
      b[j] -= h;
      const Vec col = (sys.eval(a, W) - sys.eval(b, W)) / (2 * h);
      EXPECT_LT((col - jac.state.col(j)).cwiseAbs().maxCoeff(), 1e-5) << spec.name << " state " << j;
    }
    for (int j = 0; j < sys.control_dim(); ++j) {
      Vec a = W, b = W;
      a[j] += h;
      b[j] -= h;
      const Vec col = (sys.eval(X, a) - sys.eval(X, b)) / (2 * h);
      EXPECT_LT((col - jac.control.col(j)).cwiseAbs().maxCoeff(), 1e-5) << spec.name << " control " << j;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, JacobianCheck, ::testing::Range(0, 4));

TEST(Reformulations, LpObjective) {
  Trajectory traj;
  traj.times = {0.0, 1.0, 2.0};
  traj.y_values = {1.0, 2.0, 1.0};
  // trapezoid of y^2: 0.5*1 + 4 + 0.5*1 = 5
  EXPECT_NEAR(lp_objective(traj, 2), std::sqrt(5.0), 1e-15);
  EXPECT_THROW(lp_objective(traj, 0), DomainError);
  const auto w = trapezoid_weights({0.0, 0.5, 2.0});
  EXPECT_DOUBLE_EQ(w[0], 0.25);
  EXPECT_DOUBLE_EQ(w[1], 1.0);
  EXPECT_DOUBLE_EQ(w[2], 0.75);
}
