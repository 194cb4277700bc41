#pragma once

// Benchmark problems: a scalar academic example whose optimal control is
// known in closed form, and a controlled SIR epidemic with an L1 budget on
// the intervention.

#include <cmath>

#include "peakopt/problem.hpp"

namespace peakopt {

/// Cubic driving the academic example: (1 - x)(2 - x)(4 - x).
inline double toy_cubic(double x) { return (1.0 - x) * (2.0 - x) * (4.0 - x); }

/// x' = 1, y' = (1 - x)(2 - x)(4 - x)(1 + u/2), u in [-1, 1], x(0) = y(0) = 0.
inline ProblemSpec make_toy(double horizon = 5.0) {
  ProblemSpec spec;
  spec.name = "toy";
  spec.state_dim = 1;
  spec.rhs = [](const Vec& x, double, const Vec& u) {
    return Derivative{make_vec({1.0}), toy_cubic(x[0]) * (1.0 + 0.5 * u[0])};
  };
  spec.jacobian = [](const Vec& x, double, const Vec& u) {
    const double s = x[0];
    Mat jac = Mat::Zero(2, 3);
    jac(1, 0) = (-14.0 + 14.0 * s - 3.0 * s * s) * (1.0 + 0.5 * u[0]);
    jac(1, 2) = 0.5 * toy_cubic(s);
    return jac;
  };
  spec.control_box = ControlBox({-1.0}, {1.0});
  spec.horizon = horizon;
  spec.x0 = make_vec({0.0});
  spec.y0 = 0.0;
  return spec;
}

struct SirParameters {
  double beta = 0.21;
  double gamma = 0.07;
  double horizon = 300.0;
  double budget = 28.0;
  double s0 = 1.0 - 1e-6;
  double i0 = 1e-6;
  /// Strongest admissible intervention. Not fixed by the benchmark description;
  /// see README for the calibrated value.
  double u_max = 0.5;

  double r0() const noexcept { return beta / gamma; }
};

/// S' = -(1-u) beta S I,  I' = (1-u) beta S I - gamma I,  u in [0, u_max],
/// output y = I, with the budget integral of u <= Q carried as C' = -u, C(0) = Q.
inline ProblemSpec make_sir(const SirParameters& prm = {}) {
  if (!(prm.beta > 0.0) || !(prm.gamma > 0.0))
    throw ConfigurationError("SIR rates must be positive");
  if (!(prm.horizon > 0.0)) throw ConfigurationError("SIR horizon must be positive");
  if (!(prm.u_max > 0.0 && prm.u_max < 1.0)) throw ConfigurationError("SIR u_max must lie in (0, 1)");
  if (!(prm.budget >= 0.0)) throw ConfigurationError("SIR budget must be nonnegative");
  if (!(prm.s0 >= 0.0 && prm.i0 >= 0.0 && prm.s0 + prm.i0 <= 1.0 + 1e-12))
    throw ConfigurationError("SIR initial fractions must be nonnegative and sum to at most 1");
  ProblemSpec spec;
  spec.name = "sir";
  spec.state_dim = 1;
  const double beta = prm.beta;
  const double gamma = prm.gamma;
  spec.rhs = [beta, gamma](const Vec& x, double i, const Vec& u) {
    const double infection = (1.0 - u[0]) * beta * x[0] * i;
    return Derivative{make_vec({-infection}), infection - gamma * i};
  };
  spec.jacobian = [beta, gamma](const Vec& x, double i, const Vec& u) {
    const double s = x[0];
    const double c = (1.0 - u[0]) * beta;
    Mat jac(2, 3);
    jac << -c * i, -c * s, beta * s * i,  //
        c * i, c * s - gamma, -beta * s * i;
    return jac;
  };
  spec.control_box = ControlBox({0.0}, {prm.u_max});
  spec.horizon = prm.horizon;
  spec.x0 = make_vec({prm.s0});
  spec.y0 = prm.i0;
  spec.budget = prm.budget;
  return spec;
}

}  // namespace peakopt
