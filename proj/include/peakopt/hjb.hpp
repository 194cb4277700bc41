#pragma once

// Semi-Lagrangian dynamic programming for the running-peak Mayer problems on a
// uniform rectangular grid, with greedy policy synthesis.
//
// The grid covers the components of the extended state (x, y, z[, C]). When x
// evolves independently of (y, u) it is integrated once up front and removed
// from the grid; the academic example then needs a (y, z) grid only. By
// default the z axis carries the gap z - y, so the switching surface z = y of
// P3 (and the state constraint of P1) is a grid line instead of a diagonal
// cutting through cells.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "peakopt/oracles.hpp"
#include "peakopt/reformulations.hpp"

namespace peakopt::hjb {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

class Grid {
 public:
  Grid() = default;
  Grid(std::vector<double> lower, std::vector<double> upper, std::vector<int> counts)
      : lower_(std::move(lower)), upper_(std::move(upper)), counts_(std::move(counts)) {
    if (lower_.empty() || lower_.size() != upper_.size() || lower_.size() != counts_.size())
      throw ConfigurationError("grid bounds and counts must have the same nonzero length");
    size_ = 1;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      if (counts_[i] < 2) throw ConfigurationError("grid needs at least 2 points per dimension");
      if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i]))
        throw ConfigurationError("grid bounds must be finite with lower < upper");
      spacing_.push_back((upper_[i] - lower_[i]) / (counts_[i] - 1));
      stride_.push_back(size_);
      size_ *= static_cast<std::size_t>(counts_[i]);
    }
  }

  int dim() const noexcept { return static_cast<int>(counts_.size()); }
  std::size_t size() const noexcept { return size_; }
  double lower(int i) const { return lower_.at(static_cast<std::size_t>(i)); }
  double upper(int i) const { return upper_.at(static_cast<std::size_t>(i)); }
  int count(int i) const { return counts_.at(static_cast<std::size_t>(i)); }
  double spacing(int i) const { return spacing_.at(static_cast<std::size_t>(i)); }

  /// Coordinates of the flat index (first axis fastest).
  void point(std::size_t flat, double* out) const {
    for (int d = 0; d < dim(); ++d) {
      const auto c = static_cast<int>(flat % static_cast<std::size_t>(counts_[d]));
      flat /= static_cast<std::size_t>(counts_[d]);
      out[d] = c == counts_[d] - 1 ? upper_[d] : lower_[d] + c * spacing_[d];
    }
  }

  /// Multilinear interpolation of `values` at q. Coordinates outside the grid
  /// are clamped and reported through `clamped`. Corners holding +inf are
  /// dropped and the remaining weights renormalized; all-infinite cells give +inf.
  double interpolate(const std::vector<double>& values, const double* q, bool* clamped = nullptr) const {
    std::size_t base = 0;
    double frac[kMaxDim];
    bool outside = false;
    for (int d = 0; d < dim(); ++d) {
      double c = q[d];
      const double slack = 1e-9 * spacing_[d];
      if (c < lower_[d] - slack || c > upper_[d] + slack || !std::isfinite(c)) outside = true;
      if (!std::isfinite(c)) c = lower_[d];
      c = std::clamp(c, lower_[d], upper_[d]);
      double s = (c - lower_[d]) / spacing_[d];
      int cell = std::min(static_cast<int>(s), counts_[d] - 2);
      frac[d] = s - cell;
      base += static_cast<std::size_t>(cell) * stride_[d];
    }
    if (clamped) *clamped = outside;
    double sum = 0.0;
    double weight = 0.0;
    const int corners = 1 << dim();
    for (int mask = 0; mask < corners; ++mask) {
      double w = 1.0;
      std::size_t idx = base;
      for (int d = 0; d < dim(); ++d) {
        if (mask & (1 << d)) {
          w *= frac[d];
          idx += stride_[d];
        } else {
          w *= 1.0 - frac[d];
        }
      }
      if (w == 0.0) continue;
      const double v = values[idx];
      if (v == kInfinity) continue;
      sum += w * v;
      weight += w;
    }
    return weight > 0.0 ? sum / weight : kInfinity;
  }

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<int> counts_;
  std::vector<double> spacing_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 0;
};

enum class FootScheme { euler, heun };

inline FootScheme foot_scheme_from_string(const std::string& name) {
  if (name == "euler") return FootScheme::euler;
  if (name == "heun") return FootScheme::heun;
  throw ConfigurationError("unknown HJB foot scheme '" + name + "'");
}

inline std::string to_string(FootScheme s) { return s == FootScheme::euler ? "euler" : "heun"; }

struct HjbOptions {
  int u_samples_per_dim = 21;
  std::vector<Vec> u_samples;  // overrides the regular sampling when non-empty
  FootScheme scheme = FootScheme::heun;
  bool eliminate_exogenous = true;
  bool gap_axis = true;  // z axis holds z - y
  // P3 only: the exact flow never leaves {z >= y} (below it z - y cannot
  // decrease), so feet starting there are projected back onto it. Without
  // this, a step with v = 1 across z = y lets z lag y by O(dt).
  bool sliding_projection = true;
  bool store_history = false;  // every time layer; required by synthesize()
  int max_dim = 4;
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const {
    if (u_samples.empty() && u_samples_per_dim < 1) throw ConfigurationError("need at least one u sample");
    if (max_dim < 1 || max_dim > kMaxDim) throw ConfigurationError("max_dim out of range");
  }
};

struct ValueFunction {
  Grid grid;
  ProblemSpec spec;
  ReformulationKind kind;
  HjbOptions options;
  int steps = 0;
  double dt = 0.0;
  std::vector<int> axes;          // extended-state components carried by the grid
  std::vector<Vec> exogenous;     // x(t_k) when x was eliminated, else empty
  std::vector<Vec> u_samples;
  std::vector<std::vector<double>> layers;  // V(t_k) for all k with history, else V(t_0) only
  long long out_of_domain = 0;    // clamped feet during the sweep
  double initial_value = 0.0;     // V(0, initial extended state)

  bool has_history() const noexcept { return static_cast<int>(layers.size()) == steps + 1; }

  const std::vector<double>& layer(int k) const {
    if (k == 0) return layers.front();
    if (!has_history()) throw ConfigurationError("value history was not stored; enable store_history");
    return layers.at(static_cast<std::size_t>(k));
  }

  int y_index = 0;
  int z_index = 0;

  /// Grid coordinates of a full extended state.
  void to_grid(const Vec& X, double* q) const {
    for (std::size_t a = 0; a < axes.size(); ++a) q[a] = X[axes[a]];
    if (options.gap_axis) q[z_axis()] -= X[y_index];
  }

  /// Writes the grid point q into the grid-carried components of X.
  void from_grid(const double* q, Vec& X) const {
    for (std::size_t a = 0; a < axes.size(); ++a) X[axes[a]] = q[a];
    if (options.gap_axis) X[z_index] += X[y_index];
  }

  std::size_t z_axis() const {
    return static_cast<std::size_t>(std::find(axes.begin(), axes.end(), z_index) - axes.begin());
  }

  /// Interpolated V(t_k, X) for a full extended state X.
  double at(int k, const Vec& X, bool* clamped = nullptr) const {
    double q[kMaxDim];
    to_grid(X, q);
    return grid.interpolate(layer(k), q, clamped);
  }
};

namespace detail {

inline std::vector<Vec> u_samples(const ProblemSpec& spec, const HjbOptions& opt) {
  if (!opt.u_samples.empty()) {
    for (const Vec& u : opt.u_samples)
      if (!spec.control_box.contains(u, 1e-12)) throw ConfigurationError("u sample outside the control box");
    return opt.u_samples;
  }
  return sample_controls(spec.control_box, opt.u_samples_per_dim);
}

/// True when x' is unaffected by y and u on a reference path and on shifted y.
inline bool x_is_exogenous(const ProblemSpec& spec, const std::vector<Vec>& samples, int steps, double dt) {
  if (spec.state_dim == 0) return false;
  Vec x = spec.x0;
  auto differs = [](const Vec& a, const Vec& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[i]) > 1e-12 * (1.0 + std::abs(a[i]))) return true;
    return false;
  };
  const int probes = std::min(steps, 50);
  for (int k = 0; k <= probes; ++k) {
    const Vec ref = spec.rhs(x, spec.y0, samples.front()).dx;
    for (const Vec& u : samples)
      for (double y : {spec.y0, spec.y0 + 1.0, spec.y0 - 1.0})
        if (differs(ref, spec.rhs(x, y, u).dx)) return false;
    x += (static_cast<double>(steps) / probes) * dt * ref;
  }
  return true;
}

/// Foot of one semi-Lagrangian step for every (u, v) sample, written to feet
/// in the order (u index major, v minor). Base rhs calls are shared across v.
class FootMap {
 public:
  FootMap(const ExtendedSystem& sys, FootScheme scheme, double dt, bool sliding)
      : sys_(sys), scheme_(scheme), dt_(dt), sliding_(sliding && sys.kind().tag == Formulation::P3) {}

  template <class Visit>
  void for_each(const Vec& X, const std::vector<Vec>& us, const std::vector<double>& vs, Visit&& visit) const {
    const int n = sys_.n();
    const int yi = sys_.y_index();
    const int zi = sys_.z_index();
    const int ci = sys_.budget_index();
    const Vec x = X.head(n);
    const double y = X[yi];
    const double z = X[zi];
    const bool above = sliding_ && z >= y;
    Vec foot = X;
    for (std::size_t a = 0; a < us.size(); ++a) {
      const Vec& u = us[a];
      const Derivative d1 = sys_.spec().rhs(x, y, u);
      const Vec x1 = x + dt_ * d1.dx;
      const double y1 = y + dt_ * d1.dy;
      Derivative d2;
      if (scheme_ == FootScheme::heun) {
        d2 = sys_.spec().rhs(x1, y1, u);
        foot.head(n) = x + 0.5 * dt_ * (d1.dx + d2.dx);
        foot[yi] = y + 0.5 * dt_ * (d1.dy + d2.dy);
      } else {
        foot.head(n) = x1;
        foot[yi] = y1;
      }
      if (ci >= 0) foot[ci] = X[ci] - dt_ * u[0];
      for (std::size_t b = 0; b < vs.size(); ++b) {
        const double g1 = sys_.growth(d1.dy, y, z, vs[b]);
        if (scheme_ == FootScheme::heun) {
          const double z1 = z + dt_ * g1;
          foot[zi] = z + 0.5 * dt_ * (g1 + sys_.growth(d2.dy, y1, z1, vs[b]));
        } else {
          foot[zi] = z + dt_ * g1;
        }
        if (above) foot[zi] = std::max(foot[zi], foot[yi]);
        visit(a * vs.size() + b, foot);
      }
    }
  }

 private:
  const ExtendedSystem& sys_;
  FootScheme scheme_;
  double dt_;
  bool sliding_;
};

inline bool feasible_state(const ExtendedSystem& sys, const Vec& X) {
  if (sys.kind().tag == Formulation::P1 && X[sys.z_index()] < X[sys.y_index()] - 1e-12) return false;
  if (sys.has_budget() && X[sys.budget_index()] < -1e-12) return false;
  return true;
}

inline void check_kind(const ReformulationKind& kind) {
  if (kind.tag != Formulation::P1 && kind.tag != Formulation::P3)
    throw ConfigurationError("the HJB solver handles P1 and P3 only");
}

/// Extended-state components carried by the grid.
inline std::vector<int> grid_axes(const ExtendedSystem& sys, bool exogenous) {
  std::vector<int> axes;
  if (!exogenous)
    for (int i = 0; i < sys.n(); ++i) axes.push_back(i);
  for (int i = sys.n(); i < sys.state_dim(); ++i) axes.push_back(i);
  return axes;
}

template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    body(std::size_t{0}, count, 0u);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end, t] { body(begin, end, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Grid dimension needed for (spec, kind) under the given options.
inline int required_grid_dim(const ProblemSpec& spec, const ReformulationKind& kind, int steps,
                             const HjbOptions& opt = {}) {
  detail::check_kind(kind);
  const ExtendedSystem sys(spec, kind);
  const bool exo = opt.eliminate_exogenous &&
                   detail::x_is_exogenous(spec, detail::u_samples(spec, opt), steps, spec.horizon / steps);
  return static_cast<int>(detail::grid_axes(sys, exo).size());
}

/// Bounds enclosing the extended trajectories reached by constant, greedy and
/// seeded random piecewise-constant controls, padded by `padding` of the range.
inline Grid reachable_grid(const ProblemSpec& spec, const ReformulationKind& kind, int steps,
                           const std::vector<int>& counts, const HjbOptions& opt = {}, double padding = 0.05,
                           int random_controls = 64, unsigned seed = 0) {
  detail::check_kind(kind);
  if (steps < 1) throw ConfigurationError("HJB needs at least one time step");
  const ExtendedSystem sys(spec, kind);
  const std::vector<Vec> us = detail::u_samples(spec, opt);
  const double dt = spec.horizon / steps;
  const bool exo = opt.eliminate_exogenous && detail::x_is_exogenous(spec, us, steps, dt);
  const std::vector<int> axes = detail::grid_axes(sys, exo);
  if (counts.size() != axes.size())
    throw ConfigurationError("grid needs " + std::to_string(axes.size()) + " dimensions for this problem");

  std::vector<double> lo(axes.size(), kInfinity), hi(axes.size(), -kInfinity);
  auto record = [&](const Vec& X) {
    for (std::size_t a = 0; a < axes.size(); ++a) {
      double c = X[axes[a]];
      if (opt.gap_axis && axes[a] == sys.z_index()) c -= X[sys.y_index()];
      lo[a] = std::min(lo[a], c);
      hi[a] = std::max(hi[a], c);
    }
  };
  const BaseSystem base(spec);
  auto run = [&](const std::function<Vec(int, const Vec&)>& policy) {
    Vec X = base.initial();
    double z = spec.y0;
    for (int k = 0; k <= steps; ++k) {
      Vec E = sys.initial();
      E.head(sys.n() + 1) = X.head(sys.n() + 1);
      E[sys.z_index()] = z;
      if (sys.has_budget()) E[sys.budget_index()] = std::max(X[base.n() + 1], 0.0);
      record(E);
      if (k == steps) break;
      Vec u = policy(k, X);
      if (sys.has_budget() && X[base.n() + 1] <= 0.0) u = spec.control_box.project(make_vec({0.0}));
      X = step(base, Scheme::rk4, X, u, dt);
      if (!X.allFinite()) throw IntegrationDiverged((k + 1) * dt, spec.name + ": reachable-set probe diverged");
      z = std::max(z, X[base.n()]);
    }
  };
  for (const Vec& u : us) run([&](int, const Vec&) { return u; });
  for (int sense : {-1, 1}) {
    run([&](int, const Vec& X) {
      std::size_t best = 0;
      double best_g = sense * spec.rhs(X.head(sys.n()), X[sys.n()], us.front()).dy;
      for (std::size_t i = 1; i < us.size(); ++i) {
        const double g = sense * spec.rhs(X.head(sys.n()), X[sys.n()], us[i]).dy;
        if (g < best_g) {
          best_g = g;
          best = i;
        }
      }
      return us[best];
    });
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, us.size() - 1);
  for (int r = 0; r < random_controls; ++r) {
    const int segments = 1 + static_cast<int>(rng() % 8);
    std::vector<Vec> values;
    for (int s = 0; s < segments; ++s) values.push_back(us[pick(rng)]);
    run([&](int k, const Vec&) { return values[static_cast<std::size_t>(k * segments / steps)]; });
  }
  std::vector<double> lower, upper;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    double l = lo[a];
    double h = hi[a];
    if (axes[a] == sys.budget_index()) {
      l = 0.0;
      h = std::max(h, *spec.budget);
    }
    const double pad = padding * std::max(h - l, 1e-6);
    const bool gap = opt.gap_axis && axes[a] == sys.z_index();
    if (gap) {
      // z >= y on every probe; starting at 0 keeps the switching surface on a grid line.
      l = 0.0;
      h += pad;
    } else if (axes[a] != sys.budget_index()) {
      l -= pad;
      h += pad;
    }
    if (!(h > l)) h = l + 1.0;
    lower.push_back(l);
    upper.push_back(h);
  }
  return Grid(lower, upper, counts);
}

/// Backward sweep V(t_k, s) = min over (u, v) samples of V(t_{k+1}, foot(s, u, v)),
/// V(T, s) = z(s). v takes the values {0, 1}. Infeasible states (P1: z < y;
/// any negative remaining budget) hold +inf.
inline ValueFunction backward_sweep(const ProblemSpec& spec, const ReformulationKind& kind, const Grid& grid,
                                    int steps, const HjbOptions& opt = {}) {
  spec.validate();
  opt.validate();
  detail::check_kind(kind);
  if (steps < 1) throw ConfigurationError("HJB needs at least one time step");
  if (grid.dim() > opt.max_dim)
    throw ConfigurationError("grid dimension " + std::to_string(grid.dim()) + " exceeds the limit of " +
                             std::to_string(opt.max_dim) +
                             "; raise max_dim explicitly if the memory and run time are acceptable");

  ValueFunction vf;
  vf.grid = grid;
  vf.spec = spec;
  vf.kind = kind;
  vf.options = opt;
  vf.steps = steps;
  vf.dt = spec.horizon / steps;
  vf.u_samples = detail::u_samples(spec, opt);
  const ExtendedSystem sys(spec, kind);
  const bool exo = opt.eliminate_exogenous && detail::x_is_exogenous(spec, vf.u_samples, steps, vf.dt);
  vf.axes = detail::grid_axes(sys, exo);
  vf.y_index = sys.y_index();
  vf.z_index = sys.z_index();
  if (static_cast<int>(vf.axes.size()) != grid.dim())
    throw ConfigurationError("grid has " + std::to_string(grid.dim()) + " dimensions but the extended state needs " +
                             std::to_string(vf.axes.size()));
  if (exo) {
    // Same foot scheme as the sweep so grid feet and the stored path agree.
    vf.exogenous.push_back(spec.x0);
    for (int k = 0; k < steps; ++k) {
      const Vec& x = vf.exogenous.back();
      const Vec d1 = spec.rhs(x, spec.y0, vf.u_samples.front()).dx;
      if (opt.scheme == FootScheme::heun) {
        const Vec d2 = spec.rhs(x + vf.dt * d1, spec.y0, vf.u_samples.front()).dx;
        vf.exogenous.push_back(x + 0.5 * vf.dt * (d1 + d2));
      } else {
        vf.exogenous.push_back(x + vf.dt * d1);
      }
    }
  }

  const std::vector<double> vs{0.0, 1.0};
  const detail::FootMap feet(sys, opt.scheme, vf.dt, opt.sliding_projection);
  const Vec X_template = sys.initial();
  auto full_state = [&](std::size_t flat, int k) {
    double q[kMaxDim];
    grid.point(flat, q);
    Vec X = X_template;
    if (exo) X.head(sys.n()) = vf.exogenous[static_cast<std::size_t>(k)];
    vf.from_grid(q, X);
    return X;
  };

  std::vector<double> next(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec X = full_state(i, steps);
    next[i] = detail::feasible_state(sys, X) ? X[sys.z_index()] : kInfinity;
  }
  if (opt.store_history) vf.layers.assign(static_cast<std::size_t>(steps + 1), {});
  if (opt.store_history) vf.layers[static_cast<std::size_t>(steps)] = next;

  const unsigned threads = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;
  std::vector<long long> clamp_counts(threads, 0);
  std::vector<double> current(grid.size());
  for (int k = steps - 1; k >= 0; --k) {
    detail::parallel_for(grid.size(), threads, [&](std::size_t begin, std::size_t end, unsigned t) {
      double q[kMaxDim];
      for (std::size_t i = begin; i < end; ++i) {
        const Vec X = full_state(i, k);
        if (!detail::feasible_state(sys, X)) {
          current[i] = kInfinity;
          continue;
        }
        double best = kInfinity;
        feet.for_each(X, vf.u_samples, vs, [&](std::size_t, const Vec& foot) {
          if (!detail::feasible_state(sys, foot)) return;
          vf.to_grid(foot, q);
          bool clamped = false;
          const double value = grid.interpolate(next, q, &clamped);
          if (clamped) ++clamp_counts[t];
          if (value < best) best = value;
        });
        current[i] = best;
      }
    });
    std::swap(current, next);
    if (opt.store_history) vf.layers[static_cast<std::size_t>(k)] = next;
  }
  if (!opt.store_history) vf.layers.push_back(std::move(next));
  for (long long c : clamp_counts) vf.out_of_domain += c;
  vf.initial_value = vf.at(0, sys.initial());
  return vf;
}

struct Synthesis {
  Trajectory trajectory;
  double terminal_z = 0.0;
  double value = 0.0;           // V(0, initial) of the value function used
  long long out_of_domain = 0;  // clamped evaluations during synthesis
};

/// Greedy policy extraction: at each step the (u, v) sample minimizing the
/// interpolated V(t_{k+1}, foot) is applied (lowest sample index on ties).
inline Synthesis synthesize(const ValueFunction& vf, const ProblemSpec& spec, const Vec& initial) {
  const ExtendedSystem sys(spec, vf.kind);
  if (initial.size() != sys.state_dim()) throw ConfigurationError("initial extended state has the wrong size");
  if (!vf.has_history()) throw ConfigurationError("synthesis needs the stored value history; enable store_history");
  const detail::FootMap feet(sys, vf.options.scheme, vf.dt, vf.options.sliding_projection);
  const std::vector<double> vs{0.0, 1.0};

  Synthesis out;
  out.value = vf.initial_value;
  Trajectory& traj = out.trajectory;
  Vec X = initial;
  std::vector<double> u_values;
  auto record = [&](int k) {
    traj.times.push_back(k == vf.steps ? spec.horizon : k * vf.dt);
    traj.states.push_back(X.head(sys.n()));
    traj.y_values.push_back(X[sys.y_index()]);
    traj.z_values.push_back(X[sys.z_index()]);
    if (sys.has_budget()) traj.budget_values.push_back(X[sys.budget_index()]);
  };
  record(0);
  for (int k = 0; k < vf.steps; ++k) {
    std::size_t best = 0;
    double best_value = kInfinity;
    Vec best_foot = X;
    bool any = false;
    feet.for_each(X, vf.u_samples, vs, [&](std::size_t idx, const Vec& foot) {
      bool clamped = false;
      const double value = detail::feasible_state(sys, foot) ? vf.at(k + 1, foot, &clamped) : kInfinity;
      if (clamped) ++out.out_of_domain;
      if (!any || value < best_value) {
        best_value = value;
        best = idx;
        best_foot = foot;
        any = true;
      }
    });
    const Vec& u = vf.u_samples[best / vs.size()];
    for (Eigen::Index j = 0; j < u.size(); ++j) u_values.push_back(u[j]);
    traj.aux_controls.push_back(vs[best % vs.size()]);
    X = best_foot;
    record(k + 1);
  }
  traj.controls = ControlSignal(spec.horizon, spec.control_dim(), std::move(u_values));
  out.terminal_z = X[sys.z_index()];
  return out;
}

}  // namespace peakopt::hjb
