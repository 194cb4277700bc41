#pragma once

// Mayer reformulations of the peak-minimization problem. The state is extended
// with a running-peak variable z (z(0) = y(0)) driven by an auxiliary control
// v in [0, 1]:
//
//   P0      z is a free constant, z >= y(t) on [0, T]
//   P1      z' = max(g, 0) (1 - v),                       z >= y on [0, T]
//   P2      same dynamics, mixed constraint max(y - z, 0)(1 - v) + z - y >= 0
//   P3      z' = max(g, 0) (1 - v 1[z >= y]),               no constraint
//   P3theta z' = softplus(g) (1 - v omega(z - y)),          no constraint
//   Lp      minimize the L^p norm of y instead of its maximum

#include <cmath>
#include <optional>
#include <string>

#include "peakopt/integrate.hpp"
#include "peakopt/smoothing.hpp"

namespace peakopt {

enum class Formulation { P0, P1, P2, P3, P3theta, Lp };

inline std::string to_string(Formulation f) {
  switch (f) {
    case Formulation::P0: return "P0";
    case Formulation::P1: return "P1";
    case Formulation::P2: return "P2";
    case Formulation::P3: return "P3";
    case Formulation::P3theta: return "P3theta";
    case Formulation::Lp: return "Lp";
  }
  return "?";
}

inline Formulation formulation_from_string(const std::string& name) {
  if (name == "P0") return Formulation::P0;
  if (name == "P1") return Formulation::P1;
  if (name == "P2") return Formulation::P2;
  if (name == "P3") return Formulation::P3;
  if (name == "P3theta") return Formulation::P3theta;
  if (name == "Lp") return Formulation::Lp;
  throw ConfigurationError("unknown reformulation '" + name + "'");
}

struct ReformulationKind {
  Formulation tag = Formulation::P1;
  std::optional<int> p;                      // Lp exponent
  std::optional<SmoothingParams> smoothing;  // P3theta
  /// Softplus sharpness replacing max(g, 0) in P1/P2; exact max when absent.
  std::optional<double> max_smoothing;

  bool has_z() const noexcept {
    return tag == Formulation::P1 || tag == Formulation::P2 || tag == Formulation::P3 ||
           tag == Formulation::P3theta;
  }
  bool has_v() const noexcept { return has_z(); }

  void validate() const {
    if (tag == Formulation::Lp && (!p || *p < 1))
      throw ConfigurationError("Lp reformulation needs an exponent p >= 1");
    if (tag == Formulation::P3theta) {
      if (!smoothing) throw ConfigurationError("P3theta needs smoothing parameters");
      smoothing->validate();
    }
    if (max_smoothing && !(*max_smoothing > 0.0))
      throw ConfigurationError("max smoothing sharpness must be positive");
  }

  static ReformulationKind p0() { return {Formulation::P0, {}, {}, {}}; }
  static ReformulationKind p1(std::optional<double> lambda = {}) { return {Formulation::P1, {}, {}, lambda}; }
  static ReformulationKind p2(std::optional<double> lambda = {}) { return {Formulation::P2, {}, {}, lambda}; }
  static ReformulationKind p3() { return {Formulation::P3, {}, {}, {}}; }
  static ReformulationKind p3theta(const SmoothingParams& params) {
    return {Formulation::P3theta, {}, params, {}};
  }
  static ReformulationKind lp(int p) { return {Formulation::Lp, p, {}, {}}; }
};

inline std::string describe(const ReformulationKind& kind) {
  std::string out = to_string(kind.tag);
  if (kind.tag == Formulation::Lp && kind.p) out += "(p=" + std::to_string(*kind.p) + ")";
  if (kind.tag == Formulation::P3theta && kind.smoothing && kind.smoothing->epsilon > 0.0)
    out += "(eps=" + std::to_string(kind.smoothing->epsilon) + ")";
  return out;
}

struct ExtendedState {
  Vec x;
  double y = 0.0;
  double z = 0.0;
  std::optional<double> budget;
};

struct ExtendedDerivative {
  Vec dx;
  double dy = 0.0;
  double dz = 0.0;
  std::optional<double> dbudget;
};

// Running-peak growth laws, as functions of g = y'.

/// max(g, 0)(1 - v)
inline double peak_growth_p1(double g, double v) { return std::max(g, 0.0) * (1.0 - v); }

/// max(g, 0)(1 - v 1[z >= y]); discontinuous across z = y.
inline double peak_growth_p3(double g, double y, double z, double v) {
  return std::max(g, 0.0) * (1.0 - v * (z - y >= 0.0 ? 1.0 : 0.0));
}

/// max(g, 0)(1 - v exp(-theta max(y - z, 0))): exact max, exponential indicator.
/// Never exceeds peak_growth_p3.
inline double peak_growth_theta_exact(double g, double y, double z, double v, double theta) {
  return std::max(g, 0.0) * (1.0 - v * std::exp(-theta * std::max(y - z, 0.0)));
}

/// softplus(g, lambda1)(1 - v omega(z - y)): smooth in every argument.
inline double peak_growth_theta(double g, double y, double z, double v, const SmoothingParams& params) {
  return softplus(g, params.lambda1) * (1.0 - v * omega(z - y, params.alpha, params.lambda2));
}

/// z - y; feasible when nonnegative.
inline double constraint_c(const ExtendedState& s) { return s.z - s.y; }

/// max(y - z, 0)(1 - v) + z - y; feasible when nonnegative.
inline double constraint_cm(const ExtendedState& s, double v) {
  return std::max(s.y - s.z, 0.0) * (1.0 - v) + s.z - s.y;
}

namespace detail {

inline ExtendedDerivative extend(const ProblemSpec& spec, const ExtendedState& s, const Vec& u,
                                 double dz) {
  Derivative d = evaluate_rhs(spec, s.x, s.y, u);
  ExtendedDerivative out{d.dx, d.dy, dz, {}};
  if (spec.budget) out.dbudget = -u[0];
  return out;
}

inline void check_v(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError("auxiliary control v must lie in [0, 1]");
}

}  // namespace detail

inline ExtendedDerivative rhs_p1(const ProblemSpec& spec, const ExtendedState& s, const Vec& u, double v) {
  detail::check_v(v);
  ExtendedDerivative d = detail::extend(spec, s, u, 0.0);
  d.dz = peak_growth_p1(d.dy, v);
  return d;
}

inline ExtendedDerivative rhs_p3(const ProblemSpec& spec, const ExtendedState& s, const Vec& u, double v) {
  detail::check_v(v);
  ExtendedDerivative d = detail::extend(spec, s, u, 0.0);
  d.dz = peak_growth_p3(d.dy, s.y, s.z, v);
  return d;
}

inline ExtendedDerivative rhs_p3theta(const ProblemSpec& spec, const ExtendedState& s, const Vec& u,
                                      double v, const SmoothingParams& params) {
  detail::check_v(v);
  params.validate();
  ExtendedDerivative d = detail::extend(spec, s, u, 0.0);
  d.dz = peak_growth_theta(d.dy, s.y, s.z, v, params);
  return d;
}

/// Extended system X = (x, y[, z][, C]) with control W = (u[, v]) for a given
/// reformulation. P0 and Lp carry no z state (P0's z is a decision parameter).
class ExtendedSystem {
 public:
  ExtendedSystem(ProblemSpec spec, ReformulationKind kind) : base_(std::move(spec)), kind_(std::move(kind)) {
    kind_.validate();
  }

  const ProblemSpec& spec() const noexcept { return base_.spec(); }
  const ReformulationKind& kind() const noexcept { return kind_; }
  int n() const noexcept { return base_.n(); }
  int p() const noexcept { return base_.control_dim(); }
  bool has_z() const noexcept { return kind_.has_z(); }
  bool has_v() const noexcept { return kind_.has_v(); }
  bool has_budget() const noexcept { return base_.has_budget(); }
  int y_index() const noexcept { return n(); }
  int z_index() const noexcept { return has_z() ? n() + 1 : -1; }
  int budget_index() const noexcept { return has_budget() ? n() + 1 + (has_z() ? 1 : 0) : -1; }
  int v_index() const noexcept { return has_v() ? p() : -1; }
  int state_dim() const noexcept { return n() + 1 + (has_z() ? 1 : 0) + (has_budget() ? 1 : 0); }
  int control_dim() const noexcept { return p() + (has_v() ? 1 : 0); }

  Vec initial() const {
    Vec X(state_dim());
    X.head(n()) = spec().x0;
    X[y_index()] = spec().y0;
    if (has_z()) X[z_index()] = spec().y0;
    if (has_budget()) X[budget_index()] = *spec().budget;
    return X;
  }

  Vec pack(const ExtendedState& s) const {
    Vec X(state_dim());
    X.head(n()) = s.x;
    X[y_index()] = s.y;
    if (has_z()) X[z_index()] = s.z;
    if (has_budget()) X[budget_index()] = s.budget.value_or(0.0);
    return X;
  }

  ExtendedState unpack(const Vec& X) const {
    ExtendedState s{X.head(n()), X[y_index()], has_z() ? X[z_index()] : 0.0, {}};
    if (has_budget()) s.budget = X[budget_index()];
    return s;
  }

  /// Growth rate of z given g = y'.
  double growth(double g, double y, double z, double v) const {
    switch (kind_.tag) {
      case Formulation::P1:
      case Formulation::P2:
        return max_part(g) * (1.0 - v);
      case Formulation::P3:
        return peak_growth_p3(g, y, z, v);
      case Formulation::P3theta:
        return peak_growth_theta(g, y, z, v, *kind_.smoothing);
      default:
        return 0.0;
    }
  }

  Vec eval(const Vec& X, const Vec& W) const {
    Derivative d = spec().rhs(X.head(n()), X[y_index()], W.head(p()));
    Vec dX(state_dim());
    dX.head(n()) = d.dx;
    dX[y_index()] = d.dy;
    if (has_z()) dX[z_index()] = growth(d.dy, X[y_index()], X[z_index()], W[v_index()]);
    if (has_budget()) dX[budget_index()] = -W[0];
    return dX;
  }

  SystemJacobian jacobian(const Vec& X, const Vec& W) const {
    const int d = state_dim();
    SystemJacobian jac{Mat::Zero(d, d), Mat::Zero(d, control_dim())};
    const Vec u = W.head(p());
    const double y = X[y_index()];
    Mat base = rhs_jacobian(spec(), X.head(n()), y, u);
    jac.state.topLeftCorner(n() + 1, n() + 1) = base.leftCols(n() + 1);
    jac.control.topLeftCorner(n() + 1, p()) = base.rightCols(p());
    if (has_budget()) jac.control(budget_index(), 0) = -1.0;
    if (!has_z()) return jac;

    const double g = spec().rhs(X.head(n()), y, u).dy;
    const double z = X[z_index()];
    const double v = W[v_index()];
    double d_dg = 0.0;  // partial of z' w.r.t. g
    double d_dz = 0.0;  // explicit partial w.r.t. z (y enters with the opposite sign)
    double d_dv = 0.0;
    switch (kind_.tag) {
      case Formulation::P1:
      case Formulation::P2:
        d_dg = max_slope(g) * (1.0 - v);
        d_dv = -max_part(g);
        break;
      case Formulation::P3: {
        const double ind = z - y >= 0.0 ? 1.0 : 0.0;
        d_dg = (g > 0.0 ? 1.0 : 0.0) * (1.0 - v * ind);
        d_dv = -std::max(g, 0.0) * ind;
        break;
      }
      case Formulation::P3theta: {
        const auto& sp = *kind_.smoothing;
        const double w = omega(z - y, sp.alpha, sp.lambda2);
        const double splus = softplus(g, sp.lambda1);
        d_dg = softplus_slope(g, sp.lambda1) * (1.0 - v * w);
        d_dz = -splus * v * omega_slope(z - y, sp.alpha, sp.lambda2);
        d_dv = -splus * w;
        break;
      }
      default:
        break;
    }
    const int zi = z_index();
    // chain rule through g = g(x, y, u)
    for (int j = 0; j < n() + 1; ++j) jac.state(zi, j) = d_dg * base(n(), j);
    for (int j = 0; j < p(); ++j) jac.control(zi, j) = d_dg * base(n(), n() + 1 + j);
    jac.state(zi, y_index()) -= d_dz;
    jac.state(zi, zi) = d_dz;
    jac.control(zi, v_index()) = d_dv;
    return jac;
  }

 private:
  double max_part(double g) const {
    return kind_.max_smoothing ? softplus(g, *kind_.max_smoothing) : std::max(g, 0.0);
  }
  double max_slope(double g) const {
    return kind_.max_smoothing ? softplus_slope(g, *kind_.max_smoothing) : (g > 0.0 ? 1.0 : 0.0);
  }

  BaseSystem base_;
  ReformulationKind kind_;
};

/// Trapezoid weights of a (possibly non-uniform) node grid.
inline std::vector<double> trapezoid_weights(const std::vector<double>& times) {
  std::vector<double> w(times.size(), 0.0);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double h = times[i + 1] - times[i];
    w[i] += 0.5 * h;
    w[i + 1] += 0.5 * h;
  }
  return w;
}

/// (integral of |y|^p dt)^{1/p}, composite trapezoid over the trajectory nodes.
inline double lp_objective(const Trajectory& traj, int p) {
  if (p < 1) throw DomainError("Lp exponent must be >= 1");
  const auto w = trapezoid_weights(traj.times);
  double integral = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) integral += w[i] * std::pow(std::abs(traj.y_values[i]), p);
  return std::pow(integral, 1.0 / p);
}

}  // namespace peakopt
