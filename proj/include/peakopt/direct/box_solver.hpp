#pragma once

// Box-constrained minimization  min f(x)  s.t.  lower <= x <= upper.
//
// Two projected-gradient variants share one monotone Armijo line search, so
// accepted iterates never increase f:
//  - spectral projected gradient (Barzilai-Borwein trial steps);
//  - projected L-BFGS: the gradient is scaled by a limited-memory inverse
//    Hessian restricted to the variables not held at a bound.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "peakopt/error.hpp"

namespace peakopt::direct {

enum class BoxMethod { spg, lbfgs };

inline BoxMethod box_method_from_string(const std::string& name) {
  if (name == "spg") return BoxMethod::spg;
  if (name == "lbfgs") return BoxMethod::lbfgs;
  throw ConfigurationError("unknown inner method '" + name + "'");
}

inline std::string to_string(BoxMethod m) { return m == BoxMethod::spg ? "spg" : "lbfgs"; }

struct BoxSolverOptions {
  BoxMethod method = BoxMethod::lbfgs;
  int memory = 10;  // L-BFGS pairs
  int max_iterations = 2000;
  double projected_gradient_tol = 1e-9;  // on ||P(x - g) - x||_inf
  double stall_tol = 1e-10;              // relative decrease over `stall_window` iterations
  int stall_window = 25;
  double armijo = 1e-4;
  int max_backtracks = 40;
  double step_min = 1e-12;
  double step_max = 1e12;
};

struct BoxSolverResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool monotone = true;  // accepted values never increased
};

/// `f(x, grad)` returns f(x) and writes the gradient into *grad when non-null.
template <class Objective>
BoxSolverResult spectral_projected_gradient(Objective&& f, Eigen::VectorXd x, const Eigen::VectorXd& lower,
                                            const Eigen::VectorXd& upper, const BoxSolverOptions& opt) {
  auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v.cwiseMax(lower).cwiseMin(upper); };
  BoxSolverResult res;
  x = project(x);
  Eigen::VectorXd g(x.size());
  double fx = f(x, &g);
  ++res.evaluations;

  Eigen::VectorXd pg = project(x - g) - x;
  double step = pg.lpNorm<Eigen::Infinity>() > 0.0 ? 1.0 / pg.lpNorm<Eigen::Infinity>() : 1.0;
  step = std::clamp(step, opt.step_min, opt.step_max);
  double reference = fx;

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    pg = project(x - g) - x;
    if (pg.lpNorm<Eigen::Infinity>() <= opt.projected_gradient_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd d = project(x - step * g) - x;
    const double slope = g.dot(d);
    if (!(slope < 0.0)) {
      res.converged = true;
      break;
    }
    double t = 1.0;
    Eigen::VectorXd trial;
    Eigen::VectorXd g_trial(x.size());
    double f_trial = 0.0;
    bool accepted = false;
    bool have_gradient = false;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      trial = x + t * d;
      // The full step is usually accepted, so its gradient is computed eagerly.
      have_gradient = bt == 0;
      f_trial = f(trial, have_gradient ? &g_trial : nullptr);
      ++res.evaluations;
      if (std::isfinite(f_trial) && f_trial <= fx + opt.armijo * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    // Equal merit within roundoff: keep the earlier iterate.
    if (!accepted || !(f_trial < fx)) break;
    if (!have_gradient) {
      f(trial, &g_trial);
      ++res.evaluations;
    }
    const Eigen::VectorXd s = trial - x;
    const Eigen::VectorXd yv = g_trial - g;
    if (f_trial > fx) res.monotone = false;
    x = std::move(trial);
    g = std::move(g_trial);
    fx = f_trial;
    const double sy = s.dot(yv);
    step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, opt.step_min, opt.step_max) : opt.step_max;

    if ((res.iterations + 1) % opt.stall_window == 0) {
      if (reference - fx <= opt.stall_tol * (1.0 + std::abs(fx))) {
        res.converged = true;
        ++res.iterations;
        break;
      }
      reference = fx;
    }
  }
  res.x = std::move(x);
  res.value = fx;
  return res;
}

/// Projected L-BFGS with the same line search and stopping rules as
/// spectral_projected_gradient.
template <class Objective>
BoxSolverResult projected_lbfgs(Objective&& f, Eigen::VectorXd x, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, const BoxSolverOptions& opt) {
  using Eigen::VectorXd;
  auto project = [&](const VectorXd& v) -> VectorXd { return v.cwiseMax(lower).cwiseMin(upper); };
  BoxSolverResult res;
  x = project(x);
  VectorXd g(x.size());
  double fx = f(x, &g);
  ++res.evaluations;
  std::deque<VectorXd> s_hist, y_hist;
  double reference = fx;
  const Eigen::Index n = x.size();

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    const VectorXd pg = project(x - g) - x;
    const double pg_norm = pg.lpNorm<Eigen::Infinity>();
    if (pg_norm <= opt.projected_gradient_tol) {
      res.converged = true;
      break;
    }
    // Variables at a bound with the gradient pushing outward stay fixed.
    const double eps = std::min(1e-8, pg_norm);
    VectorXd free_mask(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lower = x[i] <= lower[i] + eps && g[i] > 0.0;
      const bool at_upper = x[i] >= upper[i] - eps && g[i] < 0.0;
      free_mask[i] = (at_lower || at_upper) ? 0.0 : 1.0;
    }
    VectorXd q = g.cwiseProduct(free_mask);
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m), rho(m);
    for (std::size_t j = m; j-- > 0;) {
      const VectorXd sj = s_hist[j].cwiseProduct(free_mask);
      const VectorXd yj = y_hist[j].cwiseProduct(free_mask);
      const double sy = sj.dot(yj);
      rho[j] = sy > 1e-300 ? 1.0 / sy : 0.0;
      alpha[j] = rho[j] * sj.dot(q);
      q -= alpha[j] * yj;
    }
    double gamma = 1.0 / std::max(pg_norm, 1e-300);
    if (m > 0) {
      const VectorXd sl = s_hist.back().cwiseProduct(free_mask);
      const VectorXd yl = y_hist.back().cwiseProduct(free_mask);
      const double yy = yl.squaredNorm();
      if (yy > 0.0 && sl.dot(yl) > 0.0) gamma = sl.dot(yl) / yy;
    }
    VectorXd r = gamma * q;
    for (std::size_t j = 0; j < m; ++j) {
      const VectorXd sj = s_hist[j].cwiseProduct(free_mask);
      const VectorXd yj = y_hist[j].cwiseProduct(free_mask);
      const double beta = rho[j] * yj.dot(r);
      r += (alpha[j] - beta) * sj;
    }
    VectorXd d = -r.cwiseProduct(free_mask);
    if (!(g.dot(d) < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      d = -g / std::max(pg_norm, 1e-300);
    }

    double t = 1.0;
    VectorXd trial, g_trial(n);
    double f_trial = 0.0;
    bool accepted = false;
    bool have_gradient = false;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      trial = project(x + t * d);
      have_gradient = bt == 0;
      f_trial = f(trial, have_gradient ? &g_trial : nullptr);
      ++res.evaluations;
      if (std::isfinite(f_trial) && f_trial <= fx + opt.armijo * g.dot(trial - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted || !(f_trial < fx)) {
      if (s_hist.empty()) break;
      // Stale curvature pairs can stall the search; retry once from a plain gradient step.
      s_hist.clear();
      y_hist.clear();
      continue;
    }
    if (!have_gradient) {
      f(trial, &g_trial);
      ++res.evaluations;
    }
    VectorXd s = trial - x;
    VectorXd yv = g_trial - g;
    if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    x = std::move(trial);
    g = std::move(g_trial);
    fx = f_trial;

    if ((res.iterations + 1) % opt.stall_window == 0) {
      if (reference - fx <= opt.stall_tol * (1.0 + std::abs(fx))) {
        res.converged = true;
        ++res.iterations;
        break;
      }
      reference = fx;
    }
  }
  res.x = std::move(x);
  res.value = fx;
  return res;
}

/// Dispatches on `opt.method`.
template <class Objective>
BoxSolverResult minimize_box(Objective&& f, Eigen::VectorXd x, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const BoxSolverOptions& opt) {
  if (opt.method == BoxMethod::spg) return spectral_projected_gradient(f, std::move(x), lower, upper, opt);
  return projected_lbfgs(f, std::move(x), lower, upper, opt);
}

}  // namespace peakopt::direct
