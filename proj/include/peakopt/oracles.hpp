#pragma once

// Ground truth generators used to check the solvers independently of their
// implementation path.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "peakopt/integrate.hpp"
#include "peakopt/problems.hpp"

namespace peakopt {

/// Cumulative maximum z_k = max(y_0, ..., y_k): the smallest nondecreasing
/// sequence above y, realized by z' = max(g,0)(1-v) with v = 1 exactly while
/// y is below its past maximum.
inline std::vector<double> running_max_envelope(std::span<const double> y) {
  if (y.empty()) throw DomainError("running max of an empty sequence");
  std::vector<double> z(y.size());
  std::inclusive_scan(y.begin(), y.end(), z.begin(), [](double a, double b) { return std::max(a, b); });
  return z;
}

/// Index intervals (a, b) on which y is strictly below its running maximum,
/// i.e. the points invisible from the left. `a` is the last visible index before
/// the run, `b` the first index where y catches up again (or the last index).
inline std::vector<std::pair<std::size_t, std::size_t>> invisible_intervals(std::span<const double> y) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto z = running_max_envelope(y);
  std::size_t k = 1;
  while (k < y.size()) {
    if (y[k] < z[k]) {
      const std::size_t a = k - 1;
      while (k < y.size() && y[k] < z[k]) ++k;
      out.emplace_back(a, std::min(k, y.size() - 1));
    } else {
      ++k;
    }
  }
  return out;
}

/// Regular grid of `per_dim` samples per control dimension (lowest index first).
inline std::vector<Vec> sample_controls(const ControlBox& box, int per_dim) {
  if (per_dim < 1) throw ConfigurationError("need at least one control sample per dimension");
  std::vector<Vec> out{Vec(box.dim())};
  for (int d = 0; d < box.dim(); ++d) {
    std::vector<Vec> next;
    for (const Vec& partial : out) {
      for (int i = 0; i < per_dim; ++i) {
        Vec u = partial;
        const double frac = per_dim == 1 ? 0.5 : static_cast<double>(i) / (per_dim - 1);
        u[d] = box.lower(d) + frac * (box.upper(d) - box.lower(d));
        next.push_back(u);
      }
    }
    out = std::move(next);
  }
  return out;
}

/// Minimizer of g(x, .) over the samples for the class x' = f(x), y' = g(x, u).
/// Ties go to the lowest sample index.
inline Vec exact_feedback_particular(const ProblemSpec& spec, const Vec& x, const std::vector<Vec>& u_samples) {
  if (u_samples.empty()) throw ConfigurationError("no control samples");
  const double y = spec.y0;
  const Derivative ref = evaluate_rhs(spec, x, y, u_samples.front());
  const Derivative shifted = evaluate_rhs(spec, x, y + 1.0, u_samples.front());
  auto differs = [](double a, double b) { return std::abs(a - b) > 1e-12 * (1.0 + std::abs(a)); };
  bool violation = differs(ref.dy, shifted.dy);
  for (Eigen::Index i = 0; i < ref.dx.size(); ++i) violation |= differs(ref.dx[i], shifted.dx[i]);
  std::size_t best = 0;
  double best_g = ref.dy;
  for (std::size_t s = 0; s < u_samples.size(); ++s) {
    const Derivative d = evaluate_rhs(spec, x, y, u_samples[s]);
    for (Eigen::Index i = 0; i < ref.dx.size(); ++i) violation |= differs(ref.dx[i], d.dx[i]);
    if (d.dy < best_g) {
      best_g = d.dy;
      best = s;
    }
  }
  if (violation)
    throw ClassViolation(spec.name + ": x' must not depend on (y, u) and y' must not depend on y");
  return u_samples[best];
}

/// Switching instants of the known optimal control of the academic example.
inline const std::vector<double>& toy_switch_times() {
  static const std::vector<double> times{1.0, 2.0, 4.0};
  return times;
}

/// Bang-bang control starting at `initial` and flipping sign at each switch time
/// (right-continuous at the switches).
inline double switched_control(double t, std::span<const double> switches, double initial = -1.0) {
  const auto flips = std::upper_bound(switches.begin(), switches.end(), t) - switches.begin();
  return flips % 2 == 0 ? initial : -initial;
}

/// u*(t) = -sign((1-t)(2-t)(4-t)).
inline double toy_optimal_control(double t) { return switched_control(t, toy_switch_times()); }

/// Segments of a bang-bang scalar control with the given switch times.
inline std::vector<ControlSegment> bang_segments(double horizon, std::span<const double> switches,
                                                 double first, double second) {
  std::vector<ControlSegment> segs;
  double start = 0.0;
  bool use_first = true;
  for (double s : switches) {
    const double end = std::clamp(s, 0.0, horizon);
    if (end > start) segs.push_back({start, end, make_vec({use_first ? first : second})});
    start = std::max(start, end);
    use_first = !use_first;
  }
  if (horizon > start || segs.empty()) segs.push_back({start, horizon, make_vec({use_first ? first : second})});
  return segs;
}

/// Exact-control trajectory of the academic example with switches at t(1 + delta).
inline Trajectory toy_switched_trajectory(double delta = 0.0, double max_step = 1e-3) {
  const ProblemSpec toy = make_toy();
  std::vector<double> switches = toy_switch_times();
  for (double& s : switches) s *= 1.0 + delta;
  return integrate_segments(toy, bang_segments(toy.horizon, switches, -1.0, 1.0), max_step);
}

struct SensitivityRow {
  double delta = 0.0;
  double peak = 0.0;
  double relative_error = 0.0;
};

/// Peak of the academic example when every switch time is scaled by (1 + delta).
inline std::vector<SensitivityRow> perturb_switch_times(std::span<const double> deltas, double max_step = 1e-3) {
  const double reference = peak(toy_switched_trajectory(0.0, max_step));
  std::vector<SensitivityRow> rows;
  for (double delta : deltas) {
    const double value = peak(toy_switched_trajectory(delta, max_step));
    rows.push_back({delta, value, std::abs(value - reference) / std::abs(reference)});
  }
  return rows;
}

/// Peak of the uncontrolled SIR epidemic: I0 + S0 - (1 + log(R0 S0)) / R0.
inline double sir_uncontrolled_peak(const SirParameters& prm) {
  const double r0 = prm.r0();
  return prm.i0 + prm.s0 - (1.0 + std::log(r0 * prm.s0)) / r0;
}

struct HeldPeak {
  double peak = 0.0;        // infected level I_h at which the epidemic is held
  double s_start = 0.0;     // susceptible fraction when the hold starts
  double u_start = 0.0;     // control needed at the start of the hold (its maximum)
  double hold_duration = 0.0;
  bool admissible = false;  // u_start <= u_max
};

/// Held-peak strategy for the SIR problem: no control until I reaches I_h, then
/// u = 1 - gamma / (beta S) keeps I' = 0 until S = 1/R0, then no control again.
/// I_h is the smallest level whose hold fits in the budget. The strategy is
/// feasible (hence its peak an upper bound) when `admissible`.
inline HeldPeak sir_held_peak(const SirParameters& prm) {
  const double r0 = prm.r0();
  if (!(r0 * prm.s0 > 1.0)) throw DomainError("held-peak strategy needs R0 S0 > 1");
  const double herd = 1.0 / r0;
  const double invariant = prm.i0 + prm.s0 - std::log(prm.s0) / r0;  // I + S - ln(S)/R0 without control
  // S at which the uncontrolled epidemic first reaches level i (S decreases from s0 to herd).
  auto s_at = [&](double level) {
    double lo = herd;
    double hi = prm.s0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double i_mid = invariant - mid + std::log(mid) / r0;
      (i_mid > level ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  auto budget_used = [&](double level) {
    const double s1 = s_at(level);
    const double duration = (s1 - herd) / (prm.gamma * level);
    return duration - std::log(s1 * r0) / (prm.beta * level);
  };
  const double uncontrolled = sir_uncontrolled_peak(prm);
  double lo = prm.i0;
  double hi = uncontrolled;
  if (budget_used(lo * (1.0 + 1e-9)) <= prm.budget) hi = lo * (1.0 + 1e-9);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (budget_used(mid) > prm.budget ? lo : hi) = mid;
  }
  HeldPeak out;
  out.peak = hi;
  out.s_start = s_at(hi);
  out.u_start = 1.0 - herd / out.s_start;
  out.hold_duration = (out.s_start - herd) / (prm.gamma * hi);
  out.admissible = out.u_start <= prm.u_max + 1e-12;
  return out;
}

struct BruteForceResult {
  double best_peak = 0.0;
  std::vector<double> switch_times;
  double first_value = 0.0;
  long evaluated = 0;
  bool partial = false;  // evaluation budget ran out before the search finished
};

/// Exhaustive search over bang-bang scalar controls with at most `max_switches`
/// switches placed on `time_samples` equally spaced instants in (0, T). Controls
/// violating the problem's budget are skipped. The result is an upper bound on
/// the optimal peak.
inline BruteForceResult brute_force_bang(const ProblemSpec& spec, int max_switches, int time_samples,
                                         long max_evaluations = 2'000'000, double max_step = 1e-2) {
  if (spec.control_dim() != 1) throw UnsupportedError("brute force search needs a scalar control");
  if (max_switches < 0 || max_switches > 6) throw ConfigurationError("max_switches must lie in [0, 6]");
  if (time_samples < 1) throw ConfigurationError("need at least one candidate switch time");
  const double lo = spec.control_box.lower(0);
  const double hi = spec.control_box.upper(0);
  std::vector<double> candidates;
  for (int i = 1; i <= time_samples; ++i) candidates.push_back(spec.horizon * i / (time_samples + 1.0));

  BruteForceResult result;
  result.best_peak = std::numeric_limits<double>::infinity();
  std::vector<double> chosen;
  auto evaluate = [&](double first) {
    if (result.evaluated >= max_evaluations) {
      result.partial = true;
      return;
    }
    const double second = first == lo ? hi : lo;
    const auto segs = bang_segments(spec.horizon, chosen, first, second);
    if (spec.budget) {
      double used = 0.0;
      for (const auto& s : segs) used += (s.end - s.start) * s.u[0];
      if (used > *spec.budget + 1e-12) return;
    }
    ++result.evaluated;
    const double value = peak(integrate_segments(spec, segs, std::min(max_step, spec.horizon)));
    if (value < result.best_peak) {
      result.best_peak = value;
      result.switch_times = chosen;
      result.first_value = first;
    }
  };
  std::function<void(std::size_t)> recurse = [&](std::size_t from) {
    evaluate(lo);
    evaluate(hi);
    if (static_cast<int>(chosen.size()) == max_switches) return;
    for (std::size_t i = from; i < candidates.size(); ++i) {
      chosen.push_back(candidates[i]);
      recurse(i + 1);
      chosen.pop_back();
    }
  };
  recurse(0);
  return result;
}

}  // namespace peakopt
