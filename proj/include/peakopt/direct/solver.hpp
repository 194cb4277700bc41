#pragma once

// Augmented-Lagrangian solver for transcribed reformulations, plus warm-started
// continuation across a sequence of reformulations and bound bracketing.

#include <chrono>
#include <future>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "peakopt/direct/box_solver.hpp"
#include "peakopt/direct/transcription.hpp"

namespace peakopt::direct {

enum class GradientMode { adjoint, finite_difference };

enum class BoundRole { upper, lower, heuristic };

inline std::string to_string(BoundRole r) {
  switch (r) {
    case BoundRole::upper: return "upper";
    case BoundRole::lower: return "lower";
    case BoundRole::heuristic: return "heuristic";
  }
  return "?";
}

struct SolverConfig {
  int mesh = 500;
  IntegratorConfig integrator;

  double penalty_initial = 10.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e9;
  bool update_multipliers = true;

  BoxSolverOptions inner;
  int max_outer = 25;

  GradientMode gradient = GradientMode::adjoint;
  double fd_step = 1e-6;  // relative forward-difference step

  double feasibility_tol = 1e-6;
  double objective_stall_tol = 1e-9;

  int multistarts = 4;
  unsigned seed = 0;
  bool parallel_starts = true;

  void validate() const {
    if (mesh < 2) throw ConfigurationError("solver mesh must be >= 2");
    integrator.validate();
    if (!(penalty_initial > 0.0) || !(penalty_growth > 1.0) || !(penalty_max >= penalty_initial))
      throw ConfigurationError("invalid penalty schedule");
    if (max_outer < 1 || inner.max_iterations < 1) throw ConfigurationError("iteration limits must be positive");
    if (!(fd_step > 0.0)) throw ConfigurationError("finite-difference step must be positive");
    if (!(feasibility_tol > 0.0) || !(objective_stall_tol > 0.0))
      throw ConfigurationError("tolerances must be positive");
    if (multistarts < 1) throw ConfigurationError("need at least one start");
  }
};

struct SolveReport {
  std::string problem;
  std::string kind;
  double objective = 0.0;  // z(T) (P0: z0, Lp: the norm)
  double peak = 0.0;       // max of y over integration nodes
  double violation = 0.0;
  BoundRole bound_role = BoundRole::heuristic;
  bool success = false;
  std::string diagnostics;
  int iterations = 0;        // inner iterations, summed over outer loops and starts
  int outer_iterations = 0;  // of the selected start
  double wall_ms = 0.0;
  bool merit_monotone = true;
  int selected_start = 0;
  std::vector<double> start_objectives;
  std::vector<double> start_violations;
  Decoded controls;
  Eigen::VectorXd decision;
  Trajectory trajectory;
};

namespace detail {

/// Rockafellar augmented-Lagrangian term for r >= 0 and its derivative in r.
inline double al_term(double r, double mu, double rho, double* slope) {
  const double shifted = std::max(0.0, mu - rho * r);
  if (slope) *slope = -shifted;
  return (shifted * shifted - mu * mu) / (2.0 * rho);
}

struct Multipliers {
  std::vector<double> path;
  std::vector<double> terminal;
};

inline double merit(const TranscribedProblem& tp, const Evaluation& ev, const Multipliers& mu, double rho,
                    std::vector<double>* path_slopes, std::vector<double>* terminal_slopes) {
  double value = ev.objective;
  if (path_slopes) path_slopes->assign(ev.path.size(), 0.0);
  if (terminal_slopes) terminal_slopes->assign(ev.terminal.size(), 0.0);
  for (std::size_t k = 0; k < ev.path.size(); ++k)
    value += al_term(ev.path[k], mu.path[k], rho, path_slopes ? &(*path_slopes)[k] : nullptr);
  for (std::size_t k = 0; k < ev.terminal.size(); ++k)
    value += al_term(ev.terminal[k], mu.terminal[k], rho, terminal_slopes ? &(*terminal_slopes)[k] : nullptr);
  (void)tp;
  return value;
}

struct StartOutcome {
  Eigen::VectorXd w;
  Evaluation ev;
  int iterations = 0;
  int outer = 0;
  bool monotone = true;
  bool stalled = false;
};

inline StartOutcome run_start(const TranscribedProblem& tp, const SolverConfig& cfg, Eigen::VectorXd w) {
  StartOutcome out;
  Multipliers mu{std::vector<double>(static_cast<std::size_t>(tp.path_count()), 0.0),
                 std::vector<double>(static_cast<std::size_t>(tp.terminal_count()), 0.0)};
  double rho = cfg.penalty_initial;
  w = tp.project(std::move(w));
  double previous_violation = std::numeric_limits<double>::infinity();
  double previous_objective = std::numeric_limits<double>::infinity();

  auto merit_fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) -> double {
    Evaluation ev;
    try {
      ev = tp.evaluate(x);
    } catch (const IntegrationDiverged&) {
      return std::numeric_limits<double>::infinity();
    }
    if (!grad) return merit(tp, ev, mu, rho, nullptr, nullptr);
    std::vector<double> ps, ts;
    const double value = merit(tp, ev, mu, rho, &ps, &ts);
    if (cfg.gradient == GradientMode::adjoint) {
      *grad = tp.weighted_gradient(x, ev, 1.0, ps, ts);
    } else {
      grad->resize(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x;
        double h = cfg.fd_step * std::max(1.0, std::abs(x[i]));
        if (x[i] + h > tp.upper()[i]) h = -h;
        xp[i] += h;
        (*grad)[i] = (merit(tp, tp.evaluate(xp), mu, rho, nullptr, nullptr) - value) / h;
      }
    }
    return value;
  };

  for (out.outer = 1; out.outer <= cfg.max_outer; ++out.outer) {
    BoxSolverResult inner = minimize_box(merit_fn, w, tp.lower(), tp.upper(), cfg.inner);
    out.iterations += inner.iterations;
    out.monotone = out.monotone && inner.monotone;
    w = std::move(inner.x);
    Evaluation ev = tp.evaluate(w);
    const double violation = ev.violation();
    if (cfg.update_multipliers) {
      for (std::size_t k = 0; k < ev.path.size(); ++k) mu.path[k] = std::max(0.0, mu.path[k] - rho * ev.path[k]);
      for (std::size_t k = 0; k < ev.terminal.size(); ++k)
        mu.terminal[k] = std::max(0.0, mu.terminal[k] - rho * ev.terminal[k]);
    }
    const bool stalled =
        std::abs(previous_objective - ev.objective) <= cfg.objective_stall_tol * (1.0 + std::abs(ev.objective));
    previous_objective = ev.objective;
    out.ev = std::move(ev);
    if (violation <= cfg.feasibility_tol && stalled) break;
    if (violation > 0.25 * previous_violation || !cfg.update_multipliers)
      rho = std::min(rho * cfg.penalty_growth, cfg.penalty_max);
    previous_violation = violation;
  }
  out.outer = std::min(out.outer, cfg.max_outer);
  out.w = std::move(w);
  return out;
}

/// Default starting points: box midpoint, lower corner, upper corner, then
/// mixed corners and seeded uniform draws.
inline std::vector<Eigen::VectorXd> default_starts(const TranscribedProblem& tp, int count, unsigned seed) {
  const auto& box = tp.spec().control_box;
  Vec lo(box.dim()), hi(box.dim());
  for (int j = 0; j < box.dim(); ++j) {
    lo[j] = box.lower(j);
    hi[j] = box.upper(j);
  }
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(tp.constant_guess(box.midpoint(), 0.5));
  starts.push_back(tp.constant_guess(lo, 0.0));
  starts.push_back(tp.constant_guess(hi, 1.0));
  starts.push_back(tp.constant_guess(lo, 1.0));
  starts.push_back(tp.constant_guess(hi, 0.0));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(starts.size()) < count) {
    Eigen::VectorXd w(tp.decision_dim());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double a = std::isfinite(tp.lower()[i]) ? tp.lower()[i] : 0.0;
      const double b = std::isfinite(tp.upper()[i]) ? tp.upper()[i] : 1.0;
      w[i] = a + (b - a) * unit(rng);
    }
    if (tp.has_z0()) w[w.size() - 1] = tp.constant_guess(box.midpoint()).tail(1)[0];
    starts.push_back(w);
  }
  starts.resize(static_cast<std::size_t>(count));
  return starts;
}

}  // namespace detail

/// Solves a transcribed problem from `starts` (defaults when empty) and returns the
/// best feasible point, or the least infeasible one when no start is feasible.
inline SolveReport solve(const TranscribedProblem& tp, const SolverConfig& cfg,
                         std::vector<Eigen::VectorXd> starts = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (starts.empty()) starts = detail::default_starts(tp, cfg.multistarts, cfg.seed);

  std::vector<detail::StartOutcome> outcomes(starts.size());
  if (cfg.parallel_starts && starts.size() > 1) {
    std::vector<std::future<detail::StartOutcome>> jobs;
    for (const auto& s : starts) jobs.push_back(std::async(std::launch::async, [&tp, &cfg, s] {
      return detail::run_start(tp, cfg, s);
    }));
    for (std::size_t i = 0; i < jobs.size(); ++i) outcomes[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < starts.size(); ++i) outcomes[i] = detail::run_start(tp, cfg, starts[i]);
  }

  SolveReport report;
  report.problem = tp.spec().name;
  report.kind = describe(tp.kind());
  std::size_t best = 0;
  auto better = [&](const detail::StartOutcome& a, const detail::StartOutcome& b) {
    const bool fa = a.ev.violation() <= cfg.feasibility_tol;
    const bool fb = b.ev.violation() <= cfg.feasibility_tol;
    if (fa != fb) return fa;
    if (fa) return a.ev.objective < b.ev.objective;
    return a.ev.violation() < b.ev.violation();
  };
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    report.iterations += outcomes[i].iterations;
    report.start_objectives.push_back(outcomes[i].ev.objective);
    report.start_violations.push_back(outcomes[i].ev.violation());
    report.merit_monotone = report.merit_monotone && outcomes[i].monotone;
    if (i > 0 && better(outcomes[i], outcomes[best])) best = i;  // ties keep the earlier start
  }
  const auto& chosen = outcomes[best];
  report.selected_start = static_cast<int>(best);
  report.outer_iterations = chosen.outer;
  report.decision = chosen.w;
  report.controls = tp.decode(chosen.w);
  report.trajectory = tp.trajectory(chosen.w);
  report.objective = chosen.ev.objective;
  report.peak = peak(report.trajectory);
  report.violation = chosen.ev.violation();
  const bool feasible = report.violation <= cfg.feasibility_tol;
  report.success = feasible;
  if (tp.kind().tag == Formulation::P3theta) {
    report.bound_role = feasible ? BoundRole::lower : BoundRole::heuristic;
  } else {
    report.bound_role = feasible ? BoundRole::upper : BoundRole::heuristic;
  }
  if (!feasible) {
    report.diagnostics = "no start reached the feasibility tolerance " + std::to_string(cfg.feasibility_tol) +
                         "; least violation " + std::to_string(report.violation) + " after " +
                         std::to_string(chosen.outer) + " outer iterations";
  }
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Decision vector of `tp` initialized from a previous solution.
inline Eigen::VectorXd warm_start(const TranscribedProblem& tp, const SolveReport& previous) {
  const Decoded& d = previous.controls;
  if (d.u.mesh_size() != tp.mesh()) throw ConfigurationError("warm start needs identical meshes");
  std::optional<double> z0;
  if (tp.has_z0()) z0 = previous.peak;
  return tp.encode(d.u, d.v, z0);
}

/// Solves each reformulation in order, warm-starting from the previous solution.
/// A failed item is reported and skipped; later items warm-start from the last success.
inline std::vector<SolveReport> continuation_solve(const ProblemSpec& spec,
                                                   const std::vector<ReformulationKind>& kinds,
                                                   const SolverConfig& cfg) {
  std::vector<SolveReport> reports;
  std::optional<SolveReport> last;
  for (const auto& kind : kinds) {
    try {
      const TranscribedProblem tp = transcribe(spec, kind, cfg.mesh, cfg.integrator);
      std::vector<Eigen::VectorXd> starts;
      if (last) starts.push_back(warm_start(tp, *last));
      SolveReport report = solve(tp, cfg, std::move(starts));
      last = report;
      reports.push_back(std::move(report));
    } catch (const Error& e) {
      SolveReport failed;
      failed.problem = spec.name;
      failed.kind = describe(kind);
      failed.success = false;
      failed.diagnostics = e.what();
      failed.objective = failed.peak = failed.violation = std::numeric_limits<double>::quiet_NaN();
      reports.push_back(std::move(failed));
    }
  }
  return reports;
}

struct Bracket {
  double lower = 0.0;
  double upper = 0.0;
  double width() const noexcept { return upper - lower; }
};

/// [best lower bound, best upper bound] from P3theta and feasible P0/P1/P2/Lp reports.
/// Throws InconsistencyError when the lower bound exceeds the upper one by more than `tol`.
inline Bracket bracket(const std::vector<SolveReport>& lower_reports,
                       const std::vector<SolveReport>& upper_reports, double tol = 1e-9) {
  Bracket b{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  bool have_lower = false;
  bool have_upper = false;
  for (const auto& r : lower_reports) {
    if (r.bound_role != BoundRole::lower) continue;
    b.lower = std::max(b.lower, r.objective);
    have_lower = true;
  }
  for (const auto& r : upper_reports) {
    if (r.bound_role != BoundRole::upper) continue;
    b.upper = std::min(b.upper, r.peak);
    have_upper = true;
  }
  if (!have_lower || !have_upper)
    throw ConfigurationError("bracket needs at least one lower and one upper bound report");
  if (b.lower > b.upper + tol) throw InconsistencyError(b.lower, b.upper);
  return b;
}

}  // namespace peakopt::direct
