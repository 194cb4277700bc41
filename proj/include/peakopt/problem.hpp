#pragma once

// Controlled systems  x' = f(x, y, u),  y' = g(x, y, u)  with a distinguished
// scalar output y whose running maximum is the quantity being minimized.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "peakopt/error.hpp"

namespace peakopt {

/// Upper bound on any state or control dimension handled by the library.
inline constexpr int kMaxDim = 12;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double value : values) v[i++] = value;
  return v;
}

inline std::string format_vec(const Vec& v) {
  std::ostringstream os;
  os << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

class ControlBox {
 public:
  ControlBox() = default;
  ControlBox(std::vector<double> lower, std::vector<double> upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.empty() || lower_.size() != upper_.size())
      throw ConfigurationError("control box needs matching non-empty bound vectors");
    for (std::size_t i = 0; i < lower_.size(); ++i) {
      if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || lower_[i] > upper_[i])
        throw ConfigurationError("control box bound " + std::to_string(i) + " is invalid");
    }
    if (lower_.size() > static_cast<std::size_t>(kMaxDim))
      throw ConfigurationError("control dimension exceeds kMaxDim");
  }

  int dim() const noexcept { return static_cast<int>(lower_.size()); }
  double lower(int i) const { return lower_.at(static_cast<std::size_t>(i)); }
  double upper(int i) const { return upper_.at(static_cast<std::size_t>(i)); }

  bool contains(const Vec& u, double tol = 1e-12) const {
    if (u.size() != dim()) return false;
    for (int i = 0; i < dim(); ++i) {
      if (!(u[i] >= lower_[i] - tol && u[i] <= upper_[i] + tol)) return false;
    }
    return true;
  }

  Vec project(Vec u) const {
    for (int i = 0; i < dim(); ++i) u[i] = std::clamp(u[i], lower_[i], upper_[i]);
    return u;
  }

  Vec midpoint() const {
    Vec m(dim());
    for (int i = 0; i < dim(); ++i) m[i] = 0.5 * (lower_[i] + upper_[i]);
    return m;
  }

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

struct Derivative {
  Vec dx;
  double dy = 0.0;
};

using RhsFn = std::function<Derivative(const Vec& x, double y, const Vec& u)>;

/// Jacobian of (dx, dy) with respect to (x, y, u): (n+1) rows, (n+1+p) columns.
using JacobianFn = std::function<Mat(const Vec& x, double y, const Vec& u)>;

struct ProblemSpec {
  std::string name;
  int state_dim = 0;
  RhsFn rhs;
  JacobianFn jacobian;  // optional; central differences of rhs otherwise
  ControlBox control_box;
  double horizon = 0.0;
  Vec x0;
  double y0 = 0.0;
  /// L1 budget Q on a scalar control: integral of u over [0, T] must not exceed Q.
  std::optional<double> budget;

  int control_dim() const noexcept { return control_box.dim(); }

  void validate() const {
    if (state_dim < 0 || state_dim + 3 > kMaxDim)
      throw ConfigurationError(name + ": state dimension out of range");
    if (!rhs) throw ConfigurationError(name + ": missing right-hand side");
    if (control_box.dim() < 1) throw ConfigurationError(name + ": empty control box");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw ConfigurationError(name + ": horizon must be positive");
    if (x0.size() != state_dim) throw ConfigurationError(name + ": initial state has wrong size");
    if (budget) {
      if (control_dim() != 1) throw UnsupportedError(name + ": budget requires a scalar control");
      if (!(*budget >= 0.0)) throw ConfigurationError(name + ": budget must be nonnegative");
    }
  }
};

/// Exact right-hand side of the base system at (x, y, u).
inline Derivative evaluate_rhs(const ProblemSpec& spec, const Vec& x, double y, const Vec& u) {
  if (!spec.control_box.contains(u, 1e-9))
    throw DomainError(spec.name + ": control " + format_vec(u) + " outside the control box");
  Derivative d = spec.rhs(x, y, u);
  bool finite = d.dx.size() == spec.state_dim && std::isfinite(d.dy) && d.dx.allFinite();
  if (!finite) {
    throw DomainError(spec.name + ": non-finite right-hand side at x=" + format_vec(x) +
                      ", y=" + std::to_string(y) + ", u=" + format_vec(u));
  }
  return d;
}

/// Jacobian of the base right-hand side; central differences when no analytic form is given.
inline Mat rhs_jacobian(const ProblemSpec& spec, const Vec& x, double y, const Vec& u) {
  if (spec.jacobian) return spec.jacobian(x, y, u);
  const int n = spec.state_dim;
  const int p = spec.control_dim();
  Mat jac(n + 1, n + 1 + p);
  Vec arg(n + 1 + p);
  arg.head(n) = x;
  arg[n] = y;
  arg.tail(p) = u;
  auto eval = [&](const Vec& a) {
    Derivative d = spec.rhs(a.head(n), a[n], a.tail(p));
    Vec out(n + 1);
    out.head(n) = d.dx;
    out[n] = d.dy;
    return out;
  };
  for (int j = 0; j < n + 1 + p; ++j) {
    const double h = 6e-6 * std::max(1.0, std::abs(arg[j]));
    Vec plus = arg;
    Vec minus = arg;
    plus[j] += h;
    minus[j] -= h;
    jac.col(j) = (eval(plus) - eval(minus)) / (2.0 * h);
  }
  return jac;
}

/// Piecewise-constant control on a uniform mesh of [0, T].
class ControlSignal {
 public:
  ControlSignal() = default;
  ControlSignal(double horizon, int control_dim, std::vector<double> values)
      : horizon_(horizon), control_dim_(control_dim), values_(std::move(values)) {
    if (!(horizon_ > 0.0)) throw ConfigurationError("control signal horizon must be positive");
    if (control_dim_ < 1 || values_.empty() || values_.size() % static_cast<std::size_t>(control_dim_))
      throw ConfigurationError("control signal values do not match the control dimension");
  }

  static ControlSignal constant(double horizon, int mesh_size, const Vec& u) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(mesh_size * u.size()));
    for (int k = 0; k < mesh_size; ++k)
      for (Eigen::Index j = 0; j < u.size(); ++j) values.push_back(u[j]);
    return ControlSignal(horizon, static_cast<int>(u.size()), std::move(values));
  }

  /// Samples `u(t)` at interval midpoints.
  static ControlSignal sample(double horizon, int mesh_size, int control_dim,
                              const std::function<Vec(double)>& u) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(mesh_size * control_dim));
    const double h = horizon / mesh_size;
    for (int k = 0; k < mesh_size; ++k) {
      Vec uk = u((k + 0.5) * h);
      for (int j = 0; j < control_dim; ++j) values.push_back(uk[j]);
    }
    return ControlSignal(horizon, control_dim, std::move(values));
  }

  int mesh_size() const noexcept {
    return control_dim_ ? static_cast<int>(values_.size()) / control_dim_ : 0;
  }
  int control_dim() const noexcept { return control_dim_; }
  double horizon() const noexcept { return horizon_; }
  double step() const noexcept { return horizon_ / mesh_size(); }
  const std::vector<double>& values() const noexcept { return values_; }

  Vec at(int k) const {
    Vec u(control_dim_);
    for (int j = 0; j < control_dim_; ++j)
      u[j] = values_[static_cast<std::size_t>(k * control_dim_ + j)];
    return u;
  }
  double value(int k, int j = 0) const {
    return values_[static_cast<std::size_t>(k * control_dim_ + j)];
  }

 private:
  double horizon_ = 0.0;
  int control_dim_ = 0;
  std::vector<double> values_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> y_values;
  std::vector<double> z_values;       // empty unless a running-peak state was integrated
  std::vector<double> budget_values;  // remaining budget C(t); empty without a budget
  ControlSignal controls;
  std::vector<double> aux_controls;  // v per control interval; empty when absent

  std::size_t size() const noexcept { return times.size(); }
};

/// Maximum of y over the trajectory nodes.
inline double peak(const Trajectory& traj) {
  if (traj.y_values.empty()) throw DomainError("peak of an empty trajectory");
  return *std::max_element(traj.y_values.begin(), traj.y_values.end());
}

/// Exact integral of a scalar piecewise-constant control.
inline double budget_usage(const ControlSignal& signal) {
  if (signal.control_dim() != 1) throw UnsupportedError("budget usage requires a scalar control");
  return signal.step() * std::accumulate(signal.values().begin(), signal.values().end(), 0.0);
}

}  // namespace peakopt
