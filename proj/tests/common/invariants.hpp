#pragma once

// Randomized invariant checks shared by the property tests and the acceptance binary.
// Each returns the number of violating samples.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "peakopt/oracles.hpp"
#include "peakopt/reformulations.hpp"

namespace peakopt::invariants {

inline Vec random_control(const ControlBox& box, std::mt19937_64& rng) {
  Vec u(box.dim());
  for (int j = 0; j < box.dim(); ++j)
    u[j] = std::uniform_real_distribution<double>(box.lower(j), box.upper(j))(rng);
  return u;
}

/// z never decreases along extended RK4 integrations under random (u, v),
/// for every running-peak formulation, on the toy and SIR problems.
inline int z_monotonicity_failures(int samples, unsigned seed, int mesh = 40) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::vector<ProblemSpec> specs{make_toy(), make_sir()};
  const std::vector<ReformulationKind> kinds{ReformulationKind::p1(), ReformulationKind::p2(),
                                             ReformulationKind::p3(),
                                             ReformulationKind::p3theta(params_from_epsilon(0.1))};
  int failures = 0;
  for (int s = 0; s < samples; ++s) {
    const ExtendedSystem sys(specs[static_cast<std::size_t>(s) % specs.size()],
                             kinds[static_cast<std::size_t>(s / 2) % kinds.size()]);
    const double h = sys.spec().horizon / mesh;
    Vec X = sys.initial();
    bool ok = true;
    for (int k = 0; k < mesh && ok; ++k) {
      Vec W(sys.control_dim());
      W.head(sys.p()) = random_control(sys.spec().control_box, rng);
      W[sys.v_index()] = unit(rng) < 0.3 ? 1.0 : unit(rng);
      const Vec next = step(sys, Scheme::rk4, X, W, h);
      ok = next[sys.z_index()] >= X[sys.z_index()];
      X = next;
    }
    failures += ok ? 0 : 1;
  }
  return failures;
}

/// Trajectories meeting the mixed constraint at every node also meet z >= y there.
/// Each interval draws v at random and falls back to v = 0 (always admissible
/// for the mixed constraint) when the draw would violate it at the next node.
inline int mixed_implies_pure_failures(int samples, unsigned seed, int mesh = 40) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::vector<ProblemSpec> specs{make_toy(), make_sir()};
  int failures = 0;
  for (int s = 0; s < samples; ++s) {
    const ExtendedSystem sys(specs[static_cast<std::size_t>(s) % specs.size()], ReformulationKind::p2());
    const double h = sys.spec().horizon / mesh;
    Vec X = sys.initial();
    bool ok = true;
    for (int k = 0; k < mesh; ++k) {
      Vec W(sys.control_dim());
      W.head(sys.p()) = random_control(sys.spec().control_box, rng);
      W[sys.v_index()] = unit(rng);
      Vec next = step(sys, Scheme::rk4, X, W, h);
      if (constraint_cm(sys.unpack(next), W[sys.v_index()]) < 0.0) {
        W[sys.v_index()] = 0.0;
        next = step(sys, Scheme::rk4, X, W, h);
      }
      X = next;
      if (constraint_cm(sys.unpack(X), W[sys.v_index()]) < 0.0) break;  // not a feasible sample
      if (constraint_c(sys.unpack(X)) < -1e-12 * (1.0 + std::abs(X[sys.y_index()]))) ok = false;
    }
    failures += ok ? 0 : 1;
  }
  return failures;
}

/// 0 <= softplus(xi) - max(xi, 0) <= log(2) / lambda on a grid of xi.
inline int softplus_gap_failures(const std::vector<double>& lambdas) {
  int failures = 0;
  for (double lambda : lambdas) {
    for (int i = -2000; i <= 2000; ++i) {
      const double xi = i * 5e-3 / std::sqrt(lambda);
      const double gap = softplus(xi, lambda) - std::max(xi, 0.0);
      if (gap < -1e-15 || gap > std::numbers::ln2 / lambda * (1.0 + 1e-12)) ++failures;
    }
  }
  return failures;
}

/// Largest deviation from omega(0) = 1 - eps and omega(-eps^2) = eps.
inline double calibration_error(const std::vector<double>& epsilons) {
  double worst = 0.0;
  for (double eps : epsilons) {
    const auto p = params_from_epsilon(eps);
    worst = std::max(worst, std::abs(omega(0.0, p.alpha, p.lambda2) - (1.0 - eps)));
    worst = std::max(worst, std::abs(omega(-eps * eps, p.alpha, p.lambda2) - eps));
  }
  return worst;
}

/// running_max_envelope agrees with a direct cumulative maximum.
inline int envelope_failures(int samples, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> length(1, 200);
  int failures = 0;
  for (int s = 0; s < samples; ++s) {
    std::vector<double> y(static_cast<std::size_t>(length(rng)));
    for (double& v : y) v = normal(rng);
    const auto z = running_max_envelope(y);
    double m = -std::numeric_limits<double>::infinity();
    bool ok = z.size() == y.size();
    for (std::size_t i = 0; i < y.size() && ok; ++i) {
      m = std::max(m, y[i]);
      ok = z[i] == m;
    }
    failures += ok ? 0 : 1;
  }
  return failures;
}

inline const std::vector<double>& calibration_epsilons() {
  static const std::vector<double> eps{0.2, 0.15, 0.1, 0.075, 0.05, 0.025, 0.01};
  return eps;
}

}  // namespace peakopt::invariants
