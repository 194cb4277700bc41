#pragma once

// Fixed-step integration of piecewise-constant-control systems, together with
// the discrete adjoint of each step (used for exact gradients of transcribed
// problems).

#include <Eigen/LU>

#include <concepts>
#include <string>
#include <vector>

#include "peakopt/problem.hpp"

namespace peakopt {

enum class Scheme { rk4, heun, implicit_midpoint };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::rk4: return "rk4";
    case Scheme::heun: return "heun";
    case Scheme::implicit_midpoint: return "implicit-midpoint";
  }
  return "?";
}

inline Scheme scheme_from_string(const std::string& name) {
  if (name == "rk4") return Scheme::rk4;
  if (name == "heun") return Scheme::heun;
  if (name == "implicit-midpoint" || name == "implicit_midpoint") return Scheme::implicit_midpoint;
  throw ConfigurationError("unknown integration scheme '" + name + "'");
}

struct IntegratorConfig {
  Scheme scheme = Scheme::rk4;
  int steps_per_control_interval = 1;

  void validate() const {
    if (steps_per_control_interval < 1)
      throw ConfigurationError("steps_per_control_interval must be >= 1");
  }
};

/// Partial derivatives of a system right-hand side F(X, W).
struct SystemJacobian {
  Mat state;    // dF/dX
  Mat control;  // dF/dW
};

template <class S>
concept System = requires(const S& s, const Vec& X, const Vec& W) {
  { s.state_dim() } -> std::convertible_to<int>;
  { s.control_dim() } -> std::convertible_to<int>;
  { s.eval(X, W) } -> std::convertible_to<Vec>;
  { s.jacobian(X, W) } -> std::convertible_to<SystemJacobian>;
};

/// The base system packed as X = (x, y[, C]) with control W = u.
/// C is the remaining budget, present when the spec carries one (C' = -u).
class BaseSystem {
 public:
  explicit BaseSystem(ProblemSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const ProblemSpec& spec() const noexcept { return spec_; }
  int n() const noexcept { return spec_.state_dim; }
  bool has_budget() const noexcept { return spec_.budget.has_value(); }
  int y_index() const noexcept { return n(); }
  int budget_index() const noexcept { return n() + 1; }
  int state_dim() const noexcept { return n() + 1 + (has_budget() ? 1 : 0); }
  int control_dim() const noexcept { return spec_.control_dim(); }

  Vec initial() const {
    Vec X(state_dim());
    X.head(n()) = spec_.x0;
    X[n()] = spec_.y0;
    if (has_budget()) X[budget_index()] = *spec_.budget;
    return X;
  }

  Vec eval(const Vec& X, const Vec& W) const {
    Derivative d = spec_.rhs(X.head(n()), X[n()], W);
    Vec dX(state_dim());
    dX.head(n()) = d.dx;
    dX[n()] = d.dy;
    if (has_budget()) dX[budget_index()] = -W[0];
    return dX;
  }

  SystemJacobian jacobian(const Vec& X, const Vec& W) const {
    const int p = control_dim();
    Mat base = rhs_jacobian(spec_, X.head(n()), X[n()], W);
    SystemJacobian jac{Mat::Zero(state_dim(), state_dim()), Mat::Zero(state_dim(), p)};
    jac.state.topLeftCorner(n() + 1, n() + 1) = base.leftCols(n() + 1);
    jac.control.topRows(n() + 1) = base.rightCols(p);
    if (has_budget()) jac.control(budget_index(), 0) = -1.0;
    return jac;
  }

 private:
  ProblemSpec spec_;
};

namespace detail {

struct ExplicitTableau {
  int stages;
  double a[4][4];
  double b[4];
};

inline const ExplicitTableau& tableau(Scheme s) {
  static const ExplicitTableau rk4{
      4, {{0, 0, 0, 0}, {0.5, 0, 0, 0}, {0, 0.5, 0, 0}, {0, 0, 1, 0}}, {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6}};
  static const ExplicitTableau heun{2, {{0, 0, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}},
                                    {0.5, 0.5, 0, 0}};
  return s == Scheme::heun ? heun : rk4;
}

template <System S>
Vec implicit_midpoint_step(const S& sys, const Vec& X, const Vec& W, double h) {
  const int d = sys.state_dim();
  Vec next = X + h * sys.eval(X, W);
  for (int iter = 0; iter < 30; ++iter) {
    Vec mid = 0.5 * (X + next);
    Vec residual = next - X - h * sys.eval(mid, W);
    Mat lhs = Mat::Identity(d, d) - 0.5 * h * sys.jacobian(mid, W).state;
    Vec delta = lhs.partialPivLu().solve(residual);
    next -= delta;
    if (delta.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + next.lpNorm<Eigen::Infinity>())) break;
  }
  return next;
}

}  // namespace detail

/// Advances X by one step of size h with the control frozen at W.
template <System S>
Vec step(const S& sys, Scheme scheme, const Vec& X, const Vec& W, double h) {
  if (scheme == Scheme::implicit_midpoint) return detail::implicit_midpoint_step(sys, X, W, h);
  const auto& tab = detail::tableau(scheme);
  Vec k[4];
  Vec acc = Vec::Zero(X.size());
  for (int i = 0; i < tab.stages; ++i) {
    Vec stage = X;
    for (int j = 0; j < i; ++j)
      if (tab.a[i][j] != 0.0) stage += h * tab.a[i][j] * k[j];
    k[i] = sys.eval(stage, W);
    acc += tab.b[i] * k[i];
  }
  return X + h * acc;
}

/// Reverse-mode sweep through one step: given lambda = dL/dX_next, returns
/// dL/dX and accumulates dL/dW into `control_bar`.
template <System S>
Vec step_adjoint(const S& sys, Scheme scheme, const Vec& X, const Vec& W, double h,
                 const Vec& lambda, Vec& control_bar) {
  const int d = sys.state_dim();
  if (scheme == Scheme::implicit_midpoint) {
    Vec next = detail::implicit_midpoint_step(sys, X, W, h);
    SystemJacobian jac = sys.jacobian(0.5 * (X + next), W);
    Mat lhs = Mat::Identity(d, d) - 0.5 * h * jac.state;
    Vec mu = lhs.transpose().partialPivLu().solve(lambda);
    control_bar += h * jac.control.transpose() * mu;
    return mu + 0.5 * h * jac.state.transpose() * mu;
  }
  const auto& tab = detail::tableau(scheme);
  Vec k[4];
  Vec stages[4];
  for (int i = 0; i < tab.stages; ++i) {
    stages[i] = X;
    for (int j = 0; j < i; ++j)
      if (tab.a[i][j] != 0.0) stages[i] += h * tab.a[i][j] * k[j];
    k[i] = sys.eval(stages[i], W);
  }
  Vec k_bar[4];
  for (int i = 0; i < tab.stages; ++i) k_bar[i] = h * tab.b[i] * lambda;
  Vec x_bar = lambda;
  for (int i = tab.stages - 1; i >= 0; --i) {
    SystemJacobian jac = sys.jacobian(stages[i], W);
    Vec stage_bar = jac.state.transpose() * k_bar[i];
    control_bar += jac.control.transpose() * k_bar[i];
    x_bar += stage_bar;
    for (int j = 0; j < i; ++j)
      if (tab.a[i][j] != 0.0) k_bar[j] += h * tab.a[i][j] * stage_bar;
  }
  return x_bar;
}

/// Node times and states of a simulation with `steps` sub-steps per control interval.
struct NodeSeries {
  std::vector<double> times;
  std::vector<Vec> states;
};

/// Integrates `sys` from X0 over [0, horizon] split into `mesh` control intervals.
/// `control_at(k)` gives the frozen control of interval k.
template <System S, class ControlAt>
NodeSeries simulate(const S& sys, const Vec& X0, double horizon, int mesh, const IntegratorConfig& cfg,
                    const ControlAt& control_at) {
  cfg.validate();
  const int steps = cfg.steps_per_control_interval;
  const double h = horizon / (static_cast<double>(mesh) * steps);
  NodeSeries out;
  out.times.reserve(static_cast<std::size_t>(mesh * steps + 1));
  out.states.reserve(static_cast<std::size_t>(mesh * steps + 1));
  out.times.push_back(0.0);
  out.states.push_back(X0);
  Vec X = X0;
  for (int k = 0; k < mesh; ++k) {
    const Vec W = control_at(k);
    for (int s = 0; s < steps; ++s) {
      X = step(sys, cfg.scheme, X, W, h);
      const int index = k * steps + s + 1;
      const double t = index == mesh * steps ? horizon : index * h;
      if (!X.allFinite()) throw IntegrationDiverged(t, "state " + format_vec(X));
      out.times.push_back(t);
      out.states.push_back(X);
    }
  }
  return out;
}

/// Integrates the base system under a piecewise-constant control signal.
inline Trajectory integrate(const ProblemSpec& spec, const ControlSignal& signal,
                            const IntegratorConfig& cfg = {}) {
  BaseSystem sys(spec);
  if (signal.control_dim() != spec.control_dim())
    throw ConfigurationError("control signal dimension does not match the problem");
  if (std::abs(signal.horizon() - spec.horizon) > 1e-12 * spec.horizon)
    throw ConfigurationError("control signal horizon does not match the problem");
  for (int k = 0; k < signal.mesh_size(); ++k) {
    if (!spec.control_box.contains(signal.at(k), 1e-9))
      throw DomainError("control value " + format_vec(signal.at(k)) + " at interval " +
                        std::to_string(k) + " outside the control box");
  }
  NodeSeries nodes = simulate(sys, sys.initial(), spec.horizon, signal.mesh_size(), cfg,
                              [&](int k) { return signal.at(k); });
  Trajectory traj;
  traj.times = std::move(nodes.times);
  traj.controls = signal;
  traj.states.reserve(nodes.states.size());
  traj.y_values.reserve(nodes.states.size());
  for (const Vec& X : nodes.states) {
    traj.states.push_back(X.head(sys.n()));
    traj.y_values.push_back(X[sys.y_index()]);
    if (sys.has_budget()) traj.budget_values.push_back(X[sys.budget_index()]);
  }
  return traj;
}

/// A constant control held on [start, end).
struct ControlSegment {
  double start;
  double end;
  Vec u;
};

/// Integrates over consecutive segments that need not align with a uniform mesh.
/// Each segment is split into ceil(length / max_step) equal steps.
inline Trajectory integrate_segments(const ProblemSpec& spec, const std::vector<ControlSegment>& segments,
                                     double max_step, Scheme scheme = Scheme::rk4) {
  BaseSystem sys(spec);
  if (segments.empty()) throw ConfigurationError("no control segments");
  Trajectory traj;
  Vec X = sys.initial();
  auto record = [&](double t, const Vec& state) {
    traj.times.push_back(t);
    traj.states.push_back(state.head(sys.n()));
    traj.y_values.push_back(state[sys.y_index()]);
    if (sys.has_budget()) traj.budget_values.push_back(state[sys.budget_index()]);
  };
  record(segments.front().start, X);
  for (const auto& seg : segments) {
    const double length = seg.end - seg.start;
    if (length <= 0.0) continue;
    const int steps = std::max(1, static_cast<int>(std::ceil(length / max_step - 1e-9)));
    const double h = length / steps;
    for (int s = 1; s <= steps; ++s) {
      X = step(sys, scheme, X, seg.u, h);
      const double t = s == steps ? seg.end : seg.start + s * h;
      if (!X.allFinite()) throw IntegrationDiverged(t, "state " + format_vec(X));
      record(t, X);
    }
  }
  return traj;
}

}  // namespace peakopt
