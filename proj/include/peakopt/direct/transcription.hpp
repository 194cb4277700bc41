#pragma once

// Direct transcription: piecewise-constant controls on a uniform mesh become a
// finite decision vector; objective and node constraints are evaluated by
// fixed-step integration and differentiated by the discrete adjoint.

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <vector>

#include "peakopt/integrate.hpp"
#include "peakopt/reformulations.hpp"

namespace peakopt::direct {

using Eigen::VectorXd;

/// Controls recovered from a decision vector.
struct Decoded {
  ControlSignal u;
  std::vector<double> v;     // per interval; empty when the reformulation has no v
  std::optional<double> z0;  // P0 only
};

/// Values of a transcribed problem at one decision vector.
struct Evaluation {
  double objective = 0.0;
  std::vector<double> path;      // node residuals, >= 0 when feasible
  std::vector<double> terminal;  // terminal residuals, >= 0 when feasible
  NodeSeries nodes;              // extended states at every integration node

  /// Largest constraint violation (0 when feasible).
  double violation() const {
    double worst = 0.0;
    for (double r : path) worst = std::max(worst, -r);
    for (double r : terminal) worst = std::max(worst, -r);
    return worst;
  }
};

class TranscribedProblem {
 public:
  TranscribedProblem(ProblemSpec spec, ReformulationKind kind, int mesh, IntegratorConfig integrator = {})
      : system_(std::move(spec), std::move(kind)), mesh_(mesh), integrator_(integrator) {
    integrator_.validate();
    if (mesh_ < 2) throw ConfigurationError("transcription needs a mesh of at least 2 intervals");
    if (kind_().tag == Formulation::P3)
      throw ConfigurationError("P3 has a discontinuous right-hand side; use the HJB solver or P3theta");
    const int p = system_.p();
    const int dim = decision_dim();
    lower_.resize(dim);
    upper_.resize(dim);
    for (int k = 0; k < mesh_; ++k) {
      for (int j = 0; j < p; ++j) {
        lower_[u_offset(k) + j] = spec_().control_box.lower(j);
        upper_[u_offset(k) + j] = spec_().control_box.upper(j);
      }
      if (system_.has_v()) {
        lower_[v_offset(k)] = 0.0;
        upper_[v_offset(k)] = 1.0;
      }
    }
    if (has_z0()) {
      lower_[z0_index()] = -std::numeric_limits<double>::infinity();
      upper_[z0_index()] = std::numeric_limits<double>::infinity();
    }
  }

  const ProblemSpec& spec() const noexcept { return spec_(); }
  const ReformulationKind& kind() const noexcept { return kind_(); }
  const ExtendedSystem& system() const noexcept { return system_; }
  const IntegratorConfig& integrator() const noexcept { return integrator_; }
  int mesh() const noexcept { return mesh_; }
  bool has_z0() const noexcept { return kind_().tag == Formulation::P0; }

  int decision_dim() const noexcept {
    return mesh_ * system_.p() + (system_.has_v() ? mesh_ : 0) + (has_z0() ? 1 : 0);
  }
  int path_count() const noexcept {
    const auto tag = kind_().tag;
    return (tag == Formulation::P0 || tag == Formulation::P1 || tag == Formulation::P2) ? mesh_ + 1 : 0;
  }
  int terminal_count() const noexcept { return system_.has_budget() ? 1 : 0; }

  const VectorXd& lower() const noexcept { return lower_; }
  const VectorXd& upper() const noexcept { return upper_; }

  VectorXd project(VectorXd w) const { return w.cwiseMax(lower_).cwiseMin(upper_); }

  /// Decision vector holding u (and v) constant; z0 defaults to the peak of that control.
  VectorXd constant_guess(const Vec& u, double v = 0.5, std::optional<double> z0 = {}) const {
    return encode(ControlSignal::constant(spec_().horizon, mesh_, spec_().control_box.project(u)),
                  std::vector<double>(static_cast<std::size_t>(mesh_), v), z0);
  }

  VectorXd encode(const ControlSignal& u, const std::vector<double>& v, std::optional<double> z0 = {}) const {
    if (u.mesh_size() != mesh_ || u.control_dim() != system_.p())
      throw ConfigurationError("control signal does not match the transcription mesh");
    VectorXd w(decision_dim());
    for (int k = 0; k < mesh_; ++k) {
      for (int j = 0; j < system_.p(); ++j) w[u_offset(k) + j] = u.value(k, j);
      if (system_.has_v() && !v.empty()) w[v_offset(k)] = v.at(static_cast<std::size_t>(k));
    }
    if (system_.has_v() && v.empty()) {
      const std::vector<double> env = envelope_v(u);
      for (int k = 0; k < mesh_; ++k) w[v_offset(k)] = env[static_cast<std::size_t>(k)];
    }
    if (has_z0()) {
      if (!z0) {
        Decoded d{u, {}, 0.0};
        z0 = peak_of(simulate_decoded(d));
      }
      w[z0_index()] = *z0;
    }
    return project(w);
  }

  /// Auxiliary control realizing the running-max envelope of y under `u`:
  /// v = 1 on intervals where y sets no new maximum, 0 elsewhere.
  std::vector<double> envelope_v(const ControlSignal& u) const {
    const Trajectory traj = integrate(spec_(), u, integrator_);
    const int sub = integrator_.steps_per_control_interval;
    std::vector<double> v(static_cast<std::size_t>(mesh_), 1.0);
    double running = traj.y_values.front();
    for (int k = 0; k < mesh_; ++k) {
      for (int i = 1; i <= sub; ++i) {
        const double y = traj.y_values[static_cast<std::size_t>(k * sub + i)];
        if (y > running) {
          running = y;
          v[static_cast<std::size_t>(k)] = 0.0;
        }
      }
    }
    return v;
  }

  Decoded decode(const VectorXd& w) const {
    check_size(w);
    std::vector<double> values(w.data(), w.data() + mesh_ * system_.p());
    Decoded d{ControlSignal(spec_().horizon, system_.p(), std::move(values)), {}, {}};
    if (system_.has_v())
      for (int k = 0; k < mesh_; ++k) d.v.push_back(w[v_offset(k)]);
    if (has_z0()) d.z0 = w[z0_index()];
    return d;
  }

  Evaluation evaluate(const VectorXd& w) const {
    check_size(w);
    Evaluation ev;
    ev.nodes = simulate_decision(w);
    const auto& states = ev.nodes.states;
    const int yi = system_.y_index();
    const int zi = system_.z_index();
    switch (kind_().tag) {
      case Formulation::P0:
        ev.objective = w[z0_index()];
        break;
      case Formulation::Lp:
        ev.objective = lp_value(ev.nodes);
        break;
      default:
        ev.objective = states.back()[zi];
        break;
    }
    const int steps = integrator_.steps_per_control_interval;
    for (int k = 0; k < path_count(); ++k) {
      const Vec& X = states[static_cast<std::size_t>(k * steps)];
      switch (kind_().tag) {
        case Formulation::P0:
          ev.path.push_back(w[z0_index()] - X[yi]);
          break;
        case Formulation::P1:
          ev.path.push_back(X[zi] - X[yi]);
          break;
        case Formulation::P2:
          ev.path.push_back(constraint_cm({X.head(system_.n()), X[yi], X[zi], {}}, w[v_offset(node_interval(k))]));
          break;
        default:
          break;
      }
    }
    if (system_.has_budget()) ev.terminal.push_back(states.back()[system_.budget_index()]);
    return ev;
  }

  double objective(const VectorXd& w) const { return evaluate(w).objective; }
  std::vector<double> path_constraints(const VectorXd& w) const { return evaluate(w).path; }
  std::vector<double> terminal_constraints(const VectorXd& w) const { return evaluate(w).terminal; }

  /// Gradient of  objective_weight * f(w) + sum path_weights_k r_k(w) + sum terminal_weights_j c_j(w)
  /// at the point `ev` was computed for (discrete adjoint, one backward sweep).
  VectorXd weighted_gradient(const VectorXd& w, const Evaluation& ev, double objective_weight,
                             const std::vector<double>& path_weights,
                             const std::vector<double>& terminal_weights) const {
    check_size(w);
    const auto& states = ev.nodes.states;
    const std::size_t nodes = states.size();
    const int d = system_.state_dim();
    const int yi = system_.y_index();
    const int zi = system_.z_index();
    const int steps = integrator_.steps_per_control_interval;
    std::vector<Vec> node_bar(nodes, Vec::Zero(d));
    VectorXd w_bar = VectorXd::Zero(decision_dim());

    switch (kind_().tag) {
      case Formulation::P0:
        w_bar[z0_index()] += objective_weight;
        break;
      case Formulation::Lp: {
        const auto weights = trapezoid_weights(ev.nodes.times);
        const int p = *kind_().p;
        double integral = 0.0;
        for (std::size_t i = 0; i < nodes; ++i) integral += weights[i] * std::pow(std::abs(states[i][yi]), p);
        if (integral > 0.0) {
          const double scale = objective_weight * std::pow(integral, 1.0 / p - 1.0);
          for (std::size_t i = 0; i < nodes; ++i) {
            const double y = states[i][yi];
            const double sign = y > 0.0 ? 1.0 : (y < 0.0 ? -1.0 : 0.0);
            node_bar[i][yi] += scale * weights[i] * std::pow(std::abs(y), p - 1) * sign;
          }
        }
        break;
      }
      default:
        node_bar.back()[zi] += objective_weight;
        break;
    }

    for (int k = 0; k < path_count() && k < static_cast<int>(path_weights.size()); ++k) {
      const double b = path_weights[static_cast<std::size_t>(k)];
      if (b == 0.0) continue;
      Vec& bar = node_bar[static_cast<std::size_t>(k * steps)];
      const Vec& X = states[static_cast<std::size_t>(k * steps)];
      switch (kind_().tag) {
        case Formulation::P0:
          w_bar[z0_index()] += b;
          bar[yi] -= b;
          break;
        case Formulation::P1:
          bar[zi] += b;
          bar[yi] -= b;
          break;
        case Formulation::P2: {
          const int vi = v_offset(node_interval(k));
          const double gap = X[yi] - X[zi];
          const double active = gap > 0.0 ? (1.0 - w[vi]) : 0.0;
          bar[yi] += b * (active - 1.0);
          bar[zi] += b * (1.0 - active);
          w_bar[vi] -= b * std::max(gap, 0.0);
          break;
        }
        default:
          break;
      }
    }
    if (system_.has_budget() && !terminal_weights.empty())
      node_bar.back()[system_.budget_index()] += terminal_weights.front();

    const double h = step_size();
    Vec lambda = node_bar.back();
    for (std::size_t i = nodes - 1; i-- > 0;) {
      const int k = static_cast<int>(i) / steps;
      const Vec W = control_of(w, k);
      Vec control_bar = Vec::Zero(system_.control_dim());
      lambda = step_adjoint(system_, integrator_.scheme, states[i], W, h, lambda, control_bar);
      lambda += node_bar[i];
      for (int j = 0; j < system_.p(); ++j) w_bar[u_offset(k) + j] += control_bar[j];
      if (system_.has_v()) w_bar[v_offset(k)] += control_bar[system_.v_index()];
    }
    return w_bar;
  }

  /// Extended trajectory (with z and v when present) of a decision vector.
  Trajectory trajectory(const VectorXd& w) const {
    const NodeSeries nodes = simulate_decision(w);
    const Decoded d = decode(w);
    Trajectory traj;
    traj.times = nodes.times;
    traj.controls = d.u;
    traj.aux_controls = d.v;
    for (const Vec& X : nodes.states) {
      traj.states.push_back(X.head(system_.n()));
      traj.y_values.push_back(X[system_.y_index()]);
      if (system_.has_z()) traj.z_values.push_back(X[system_.z_index()]);
      if (system_.has_budget()) traj.budget_values.push_back(X[system_.budget_index()]);
    }
    if (has_z0()) traj.z_values.assign(traj.times.size(), *d.z0);
    return traj;
  }

 private:
  const ProblemSpec& spec_() const noexcept { return system_.spec(); }
  const ReformulationKind& kind_() const noexcept { return system_.kind(); }

  int u_offset(int k) const noexcept { return k * system_.p(); }
  int v_offset(int k) const noexcept { return mesh_ * system_.p() + k; }
  int z0_index() const noexcept { return decision_dim() - 1; }
  // The mixed constraint at node k uses v of the interval ending there.
  int node_interval(int k) const noexcept { return std::max(k - 1, 0); }
  double step_size() const noexcept {
    return spec_().horizon / (static_cast<double>(mesh_) * integrator_.steps_per_control_interval);
  }

  void check_size(const VectorXd& w) const {
    if (w.size() != decision_dim()) throw ConfigurationError("decision vector has the wrong size");
  }

  Vec control_of(const VectorXd& w, int k) const {
    Vec W(system_.control_dim());
    for (int j = 0; j < system_.p(); ++j) W[j] = w[u_offset(k) + j];
    if (system_.has_v()) W[system_.v_index()] = w[v_offset(k)];
    return W;
  }

  NodeSeries simulate_decision(const VectorXd& w) const {
    return simulate(system_, system_.initial(), spec_().horizon, mesh_, integrator_,
                    [&](int k) { return control_of(w, k); });
  }

  NodeSeries simulate_decoded(const Decoded& d) const {
    BaseSystem base(spec_());
    return simulate(base, base.initial(), spec_().horizon, mesh_, integrator_,
                    [&](int k) { return d.u.at(k); });
  }

  double peak_of(const NodeSeries& nodes) const {
    double best = -std::numeric_limits<double>::infinity();
    for (const Vec& X : nodes.states) best = std::max(best, X[system_.n()]);
    return best;
  }

  double lp_value(const NodeSeries& nodes) const {
    const auto weights = trapezoid_weights(nodes.times);
    const int p = *kind_().p;
    double integral = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i)
      integral += weights[i] * std::pow(std::abs(nodes.states[i][system_.y_index()]), p);
    return std::pow(integral, 1.0 / p);
  }

  ExtendedSystem system_;
  int mesh_;
  IntegratorConfig integrator_;
  VectorXd lower_;
  VectorXd upper_;
};

/// Builds the finite-dimensional problem for a reformulation of `spec`.
inline TranscribedProblem transcribe(const ProblemSpec& spec, const ReformulationKind& kind, int mesh,
                                     const IntegratorConfig& integrator = {}) {
  return TranscribedProblem(spec, kind, mesh, integrator);
}

}  // namespace peakopt::direct
