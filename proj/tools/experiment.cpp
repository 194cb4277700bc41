#include "experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "peakopt/oracles.hpp"

namespace peakopt::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- parsing

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    const YAML::Mark m = at.Mark();
    if (m.is_null()) throw ConfigError(source_ + ": " + msg);
    throw ConfigError(source_ + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1) + ": " + msg);
  }

  void require_map(const YAML::Node& node, const std::string& what) const {
    if (!node.IsMap()) fail(node, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& section) const {
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in " + section);
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, "'" + key + "' must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "'" + key + "' has an invalid value '" + node.Scalar() + "'");
    }
  }

  template <class T>
  void read(const YAML::Node& map, const std::string& key, T& target) const {
    const YAML::Node node = map[key];
    if (node) target = scalar<T>(node, key);
  }

  template <class T>
  void read_list(const YAML::Node& map, const std::string& key, std::vector<T>& target) const {
    const YAML::Node node = map[key];
    if (!node) return;
    if (!node.IsSequence()) fail(node, "'" + key + "' must be a list");
    target.clear();
    for (const auto& item : node) target.push_back(scalar<T>(item, key));
  }

  void positive(const YAML::Node& map, const std::string& key, double value) const {
    if (!(value > 0.0)) fail(map[key] ? map[key] : map, "'" + key + "' must be positive");
  }

  template <class F>
  void guarded(const YAML::Node& at, F&& body) const {
    try {
      body();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      fail(at, e.what());
    }
  }

 private:
  std::string source_;
};

Formulation parse_kind(const Reader& r, const YAML::Node& node, const std::string& key) {
  const auto name = r.scalar<std::string>(node, key);
  try {
    return formulation_from_string(name);
  } catch (const Error& e) {
    r.fail(node, e.what());
  }
}

void parse_problem(const Reader& r, const YAML::Node& node, ProblemSection& out) {
  r.require_map(node, "problem");
  r.check_keys(node, {"name", "horizon", "beta", "gamma", "budget", "s0", "i0", "u_max"}, "problem");
  if (!node["name"]) r.fail(node, "problem.name is required");
  out.name = r.scalar<std::string>(node["name"], "name");
  if (out.name == "toy") {
    for (const char* key : {"beta", "gamma", "budget", "s0", "i0", "u_max"})
      if (node[key]) r.fail(node[key], std::string("'") + key + "' does not apply to the toy problem");
    r.read(node, "horizon", out.toy_horizon);
    r.positive(node, "horizon", out.toy_horizon);
  } else if (out.name == "sir") {
    r.read(node, "beta", out.sir.beta);
    r.read(node, "gamma", out.sir.gamma);
    r.read(node, "horizon", out.sir.horizon);
    r.read(node, "budget", out.sir.budget);
    r.read(node, "s0", out.sir.s0);
    r.read(node, "i0", out.sir.i0);
    r.read(node, "u_max", out.sir.u_max);
  } else {
    r.fail(node["name"], "unknown problem '" + out.name + "' (expected toy or sir)");
  }
  r.guarded(node, [&] { out.build().validate(); });
}

void parse_reformulation(const Reader& r, const YAML::Node& node, ReformulationSection& out) {
  r.require_map(node, "reformulation");
  r.check_keys(node, {"kind", "epsilon", "lambda1", "p", "max_smoothing"}, "reformulation");
  if (!node["kind"]) r.fail(node, "reformulation.kind is required");
  out.tag = parse_kind(r, node["kind"], "kind");
  r.read(node, "epsilon", out.epsilon);
  r.read(node, "lambda1", out.lambda1);
  r.read(node, "p", out.p);
  if (node["max_smoothing"]) out.max_smoothing = r.scalar<double>(node["max_smoothing"], "max_smoothing");
  r.guarded(node, [&] { out.build().validate(); });
}

void parse_solver(const Reader& r, const YAML::Node& node, direct::SolverConfig& out) {
  r.require_map(node, "solver");
  r.check_keys(node,
               {"mesh", "scheme", "steps_per_interval", "inner_method", "memory", "inner_iterations",
                "projected_gradient_tol", "stall_tol", "stall_window", "max_outer", "penalty_initial",
                "penalty_growth", "penalty_max", "update_multipliers", "gradient", "fd_step", "feasibility_tol",
                "objective_stall_tol", "multistarts", "parallel_starts"},
               "solver");
  r.read(node, "mesh", out.mesh);
  if (node["scheme"]) {
    r.guarded(node["scheme"], [&] {
      out.integrator.scheme = scheme_from_string(r.scalar<std::string>(node["scheme"], "scheme"));
    });
  }
  r.read(node, "steps_per_interval", out.integrator.steps_per_control_interval);
  if (node["inner_method"]) {
    r.guarded(node["inner_method"], [&] {
      out.inner.method = direct::box_method_from_string(r.scalar<std::string>(node["inner_method"], "inner_method"));
    });
  }
  r.read(node, "memory", out.inner.memory);
  r.read(node, "inner_iterations", out.inner.max_iterations);
  r.read(node, "projected_gradient_tol", out.inner.projected_gradient_tol);
  r.read(node, "stall_tol", out.inner.stall_tol);
  r.read(node, "stall_window", out.inner.stall_window);
  r.read(node, "max_outer", out.max_outer);
  r.read(node, "penalty_initial", out.penalty_initial);
  r.read(node, "penalty_growth", out.penalty_growth);
  r.read(node, "penalty_max", out.penalty_max);
  r.read(node, "update_multipliers", out.update_multipliers);
  if (node["gradient"]) {
    const auto g = r.scalar<std::string>(node["gradient"], "gradient");
    if (g == "adjoint") out.gradient = direct::GradientMode::adjoint;
    else if (g == "finite_difference") out.gradient = direct::GradientMode::finite_difference;
    else r.fail(node["gradient"], "gradient must be adjoint or finite_difference");
  }
  r.read(node, "fd_step", out.fd_step);
  r.read(node, "feasibility_tol", out.feasibility_tol);
  r.read(node, "objective_stall_tol", out.objective_stall_tol);
  r.read(node, "multistarts", out.multistarts);
  r.read(node, "parallel_starts", out.parallel_starts);
  if (out.inner.memory < 1) r.fail(node["memory"], "'memory' must be at least 1");
  if (out.inner.stall_window < 1) r.fail(node["stall_window"], "'stall_window' must be at least 1");
  r.guarded(node, [&] { out.validate(); });
}

void parse_sweep(const Reader& r, const YAML::Node& node, SweepSection& out) {
  r.require_map(node, "sweep");
  r.check_keys(node, {"parameter", "values", "upper", "lambda1", "monotone_tol", "bracket_tol"}, "sweep");
  out.present = true;
  r.read(node, "parameter", out.parameter);
  if (out.parameter != "theta" && out.parameter != "p")
    r.fail(node["parameter"], "sweep.parameter must be theta or p");
  if (!node["values"]) r.fail(node, "sweep.values is required");
  r.read_list(node, "values", out.values);
  if (out.values.empty()) r.fail(node["values"], "sweep.values is empty");
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double v = out.values[i];
    if (out.parameter == "theta" && !(v > 0.0 && v < 1.0))
      r.fail(node["values"][i], "theta sweep values are epsilons in (0, 1)");
    if (out.parameter == "p" && !(v >= 1.0 && v == std::floor(v)))
      r.fail(node["values"][i], "p sweep values must be integers >= 1");
  }
  if (node["upper"]) {
    if (!node["upper"].IsSequence()) r.fail(node["upper"], "'upper' must be a list");
    out.upper.clear();
    for (const auto& item : node["upper"]) {
      const Formulation f = parse_kind(r, item, "upper");
      if (f != Formulation::P0 && f != Formulation::P1 && f != Formulation::P2)
        r.fail(item, "upper-bound solves must be P0, P1 or P2");
      out.upper.push_back(f);
    }
  }
  r.read(node, "lambda1", out.lambda1);
  r.read(node, "monotone_tol", out.monotone_tol);
  r.read(node, "bracket_tol", out.bracket_tol);
  r.positive(node, "lambda1", out.lambda1);
  if (!(out.monotone_tol >= 0.0)) r.fail(node["monotone_tol"], "'monotone_tol' must be nonnegative");
  if (!(out.bracket_tol >= 0.0)) r.fail(node["bracket_tol"], "'bracket_tol' must be nonnegative");
}

void parse_hjb(const Reader& r, const YAML::Node& node, HjbSection& out) {
  r.require_map(node, "hjb");
  r.check_keys(node,
               {"kind", "counts", "steps", "lower", "upper", "padding", "u_samples", "scheme", "gap_axis",
                "sliding_projection", "eliminate_exogenous", "max_dim", "threads", "synthesize", "export"},
               "hjb");
  out.present = true;
  if (node["kind"]) {
    out.kind = parse_kind(r, node["kind"], "kind");
    if (out.kind != Formulation::P1 && out.kind != Formulation::P3) r.fail(node["kind"], "hjb.kind must be P1 or P3");
  }
  if (!node["counts"]) r.fail(node, "hjb.counts is required");
  r.read_list(node, "counts", out.counts);
  if (out.counts.empty()) r.fail(node["counts"], "hjb.counts is empty");
  for (std::size_t i = 0; i < out.counts.size(); ++i)
    if (out.counts[i] < 2) r.fail(node["counts"][i], "grid counts must be at least 2");
  r.read(node, "steps", out.steps);
  if (out.steps < 1) r.fail(node["steps"], "hjb.steps must be positive");
  r.read_list(node, "lower", out.lower);
  r.read_list(node, "upper", out.upper);
  if (out.lower.empty() != out.upper.empty()) r.fail(node, "hjb.lower and hjb.upper must be given together");
  if (!out.lower.empty() && (out.lower.size() != out.counts.size() || out.upper.size() != out.counts.size()))
    r.fail(node["lower"], "hjb.lower and hjb.upper need one entry per grid dimension");
  r.read(node, "padding", out.padding);
  if (!(out.padding >= 0.0)) r.fail(node["padding"], "hjb.padding must be nonnegative");
  r.read(node, "u_samples", out.options.u_samples_per_dim);
  if (out.options.u_samples_per_dim < 1) r.fail(node["u_samples"], "hjb.u_samples must be positive");
  if (node["scheme"]) {
    r.guarded(node["scheme"], [&] {
      out.options.scheme = hjb::foot_scheme_from_string(r.scalar<std::string>(node["scheme"], "scheme"));
    });
  }
  r.read(node, "gap_axis", out.options.gap_axis);
  r.read(node, "sliding_projection", out.options.sliding_projection);
  r.read(node, "eliminate_exogenous", out.options.eliminate_exogenous);
  r.read(node, "max_dim", out.options.max_dim);
  if (out.options.max_dim < 1 || out.options.max_dim > kMaxDim)
    r.fail(node["max_dim"], "hjb.max_dim must lie in [1, " + std::to_string(kMaxDim) + "]");
  r.read(node, "threads", out.options.threads);
  r.read(node, "synthesize", out.synthesize);
  r.read(node, "export", out.value_export);
  if (out.value_export != "csv" && out.value_export != "binary" && out.value_export != "none")
    r.fail(node["export"], "hjb.export must be csv, binary or none");
  out.options.store_history = out.synthesize;
}

void parse_oracle(const Reader& r, const YAML::Node& node, OracleSection& out) {
  r.require_map(node, "oracle");
  r.check_keys(node, {"deltas", "max_step"}, "oracle");
  r.read_list(node, "deltas", out.deltas);
  r.read(node, "max_step", out.max_step);
  r.positive(node, "max_step", out.max_step);
  for (std::size_t i = 0; i < out.deltas.size(); ++i)
    if (!(out.deltas[i] > -1.0)) r.fail(node["deltas"][i], "perturbations must exceed -1");
}

// ---------------------------------------------------------------- output helpers

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// t, y, z, u, v, then base states and remaining budget. z is the running-peak
/// state when integrated, otherwise the running maximum of y.
void write_series(const fs::path& path, const Trajectory& traj) {
  const std::size_t nodes = traj.times.size();
  const int mesh = traj.controls.mesh_size();
  const int p = traj.controls.control_dim();
  const std::size_t sub = mesh > 0 ? std::max<std::size_t>(1, (nodes - 1) / static_cast<std::size_t>(mesh)) : 1;
  const std::vector<double> z = traj.z_values.empty() ? running_max_envelope(traj.y_values) : traj.z_values;
  const int n = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().size());

  std::ostringstream out;
  out << "t,y,z";
  if (p == 1) out << ",u";
  else
    for (int j = 0; j < p; ++j) out << ",u" << j;
  out << ",v";
  for (int i = 0; i < n; ++i) out << ",x" << i;
  if (!traj.budget_values.empty()) out << ",C";
  out << "\n";
  for (std::size_t i = 0; i < nodes; ++i) {
    const int k = std::min(static_cast<int>(i / sub), mesh - 1);
    out << number(traj.times[i]) << ',' << number(traj.y_values[i]) << ',' << number(z[i]);
    for (int j = 0; j < p; ++j) out << ',' << number(traj.controls.value(k, j));
    out << ',';
    if (!traj.aux_controls.empty()) out << number(traj.aux_controls[static_cast<std::size_t>(k)]);
    for (int d = 0; d < n; ++d) out << ',' << number(traj.states[i][d]);
    if (!traj.budget_values.empty()) out << ',' << number(traj.budget_values[i]);
    out << "\n";
  }
  write_text(path, out.str());
}

json report_json(const direct::SolveReport& r, const std::string& hash, unsigned seed, const ProblemSpec& spec) {
  json j;
  j["problem"] = r.problem;
  j["kind"] = r.kind;
  j["objective"] = finite_or_null(r.objective);
  j["peak"] = finite_or_null(r.peak);
  j["violation"] = finite_or_null(r.violation);
  j["bound_role"] = direct::to_string(r.bound_role);
  j["iterations"] = r.iterations;
  j["wall_ms"] = r.wall_ms;
  j["config_hash"] = hash;
  j["success"] = r.success;
  j["diagnostics"] = r.diagnostics;
  j["seed"] = seed;
  j["outer_iterations"] = r.outer_iterations;
  j["merit_monotone"] = r.merit_monotone;
  j["selected_start"] = r.selected_start;
  j["start_objectives"] = r.start_objectives;
  j["start_violations"] = r.start_violations;
  if (spec.budget && r.controls.u.mesh_size() > 0) {
    j["budget"] = *spec.budget;
    j["budget_used"] = budget_usage(r.controls.u);
  }
  return j;
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory " + out.string() + ": " + ec.message());
}

std::string label(const ReformulationKind& kind) {
  std::string s = describe(kind);
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' ? c : '_';
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

}  // namespace

// ---------------------------------------------------------------- sections

ProblemSpec ProblemSection::build() const {
  if (name == "toy") return make_toy(toy_horizon);
  if (name == "sir") return make_sir(sir);
  throw ConfigurationError("unknown problem '" + name + "'");
}

ReformulationKind ReformulationSection::build() const {
  switch (tag) {
    case Formulation::P0: return ReformulationKind::p0();
    case Formulation::P1: return ReformulationKind::p1(max_smoothing);
    case Formulation::P2: return ReformulationKind::p2(max_smoothing);
    case Formulation::P3: return ReformulationKind::p3();
    case Formulation::P3theta: return ReformulationKind::p3theta(params_from_epsilon(epsilon, lambda1));
    case Formulation::Lp: return ReformulationKind::lp(p);
  }
  throw ConfigurationError("unknown reformulation");
}

Experiment parse_experiment(const std::string& text, const std::string& source) {
  const Reader r(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                      ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source + ": configuration must be a mapping");
  r.check_keys(root, {"version", "seed", "problem", "reformulation", "solver", "sweep", "hjb", "oracle"},
               "configuration");

  Experiment exp;
  exp.source = source;
  if (!root["version"]) r.fail(root, "'version' is required");
  exp.version = r.scalar<int>(root["version"], "version");
  if (exp.version != 1) r.fail(root["version"], "unsupported configuration version " + std::to_string(exp.version));
  if (root["seed"]) exp.seed = r.scalar<unsigned>(root["seed"], "seed");
  if (!root["problem"]) r.fail(root, "'problem' section is required");
  parse_problem(r, root["problem"], exp.problem);
  if (root["reformulation"]) {
    exp.has_reformulation = true;
    parse_reformulation(r, root["reformulation"], exp.reformulation);
  }
  if (root["solver"]) parse_solver(r, root["solver"], exp.solver);
  if (root["sweep"]) parse_sweep(r, root["sweep"], exp.sweep);
  if (root["hjb"]) parse_hjb(r, root["hjb"], exp.hjb);
  if (root["oracle"]) parse_oracle(r, root["oracle"], exp.oracle);
  return exp;
}

Experiment load_experiment(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open configuration file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_experiment(text.str(), path.string());
}

std::string resolved_yaml(const Experiment& exp, unsigned seed) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "version" << YAML::Value << exp.version;
  e << YAML::Key << "seed" << YAML::Value << seed;

  e << YAML::Key << "problem" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << exp.problem.name;
  if (exp.problem.name == "toy") {
    e << YAML::Key << "horizon" << YAML::Value << exp.problem.toy_horizon;
  } else {
    const auto& s = exp.problem.sir;
    e << YAML::Key << "beta" << YAML::Value << s.beta << YAML::Key << "gamma" << YAML::Value << s.gamma;
    e << YAML::Key << "horizon" << YAML::Value << s.horizon << YAML::Key << "budget" << YAML::Value << s.budget;
    e << YAML::Key << "s0" << YAML::Value << s.s0 << YAML::Key << "i0" << YAML::Value << s.i0;
    e << YAML::Key << "u_max" << YAML::Value << s.u_max;
  }
  e << YAML::EndMap;

  if (exp.has_reformulation) {
    const auto& f = exp.reformulation;
    e << YAML::Key << "reformulation" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "kind" << YAML::Value << to_string(f.tag);
    if (f.tag == Formulation::P3theta) {
      e << YAML::Key << "epsilon" << YAML::Value << f.epsilon;
      e << YAML::Key << "lambda1" << YAML::Value << f.lambda1;
    }
    if (f.tag == Formulation::Lp) e << YAML::Key << "p" << YAML::Value << f.p;
    if (f.max_smoothing) e << YAML::Key << "max_smoothing" << YAML::Value << *f.max_smoothing;
    e << YAML::EndMap;
  }

  const auto& s = exp.solver;
  e << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "mesh" << YAML::Value << s.mesh;
  e << YAML::Key << "scheme" << YAML::Value << to_string(s.integrator.scheme);
  e << YAML::Key << "steps_per_interval" << YAML::Value << s.integrator.steps_per_control_interval;
  e << YAML::Key << "inner_method" << YAML::Value << direct::to_string(s.inner.method);
  e << YAML::Key << "memory" << YAML::Value << s.inner.memory;
  e << YAML::Key << "inner_iterations" << YAML::Value << s.inner.max_iterations;
  e << YAML::Key << "projected_gradient_tol" << YAML::Value << s.inner.projected_gradient_tol;
  e << YAML::Key << "stall_tol" << YAML::Value << s.inner.stall_tol;
  e << YAML::Key << "stall_window" << YAML::Value << s.inner.stall_window;
  e << YAML::Key << "max_outer" << YAML::Value << s.max_outer;
  e << YAML::Key << "penalty_initial" << YAML::Value << s.penalty_initial;
  e << YAML::Key << "penalty_growth" << YAML::Value << s.penalty_growth;
  e << YAML::Key << "penalty_max" << YAML::Value << s.penalty_max;
  e << YAML::Key << "update_multipliers" << YAML::Value << s.update_multipliers;
  e << YAML::Key << "gradient" << YAML::Value
    << (s.gradient == direct::GradientMode::adjoint ? "adjoint" : "finite_difference");
  e << YAML::Key << "fd_step" << YAML::Value << s.fd_step;
  e << YAML::Key << "feasibility_tol" << YAML::Value << s.feasibility_tol;
  e << YAML::Key << "objective_stall_tol" << YAML::Value << s.objective_stall_tol;
  e << YAML::Key << "multistarts" << YAML::Value << s.multistarts;
  e << YAML::Key << "parallel_starts" << YAML::Value << s.parallel_starts;
  e << YAML::EndMap;

  if (exp.sweep.present) {
    const auto& w = exp.sweep;
    e << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "parameter" << YAML::Value << w.parameter;
    e << YAML::Key << "values" << YAML::Value << YAML::Flow << w.values;
    e << YAML::Key << "upper" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Formulation f : w.upper) e << to_string(f);
    e << YAML::EndSeq;
    e << YAML::Key << "lambda1" << YAML::Value << w.lambda1;
    e << YAML::Key << "monotone_tol" << YAML::Value << w.monotone_tol;
    e << YAML::Key << "bracket_tol" << YAML::Value << w.bracket_tol;
    e << YAML::EndMap;
  }

  if (exp.hjb.present) {
    const auto& h = exp.hjb;
    e << YAML::Key << "hjb" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "kind" << YAML::Value << to_string(h.kind);
    e << YAML::Key << "counts" << YAML::Value << YAML::Flow << h.counts;
    e << YAML::Key << "steps" << YAML::Value << h.steps;
    if (!h.lower.empty()) {
      e << YAML::Key << "lower" << YAML::Value << YAML::Flow << h.lower;
      e << YAML::Key << "upper" << YAML::Value << YAML::Flow << h.upper;
    }
    e << YAML::Key << "padding" << YAML::Value << h.padding;
    e << YAML::Key << "u_samples" << YAML::Value << h.options.u_samples_per_dim;
    e << YAML::Key << "scheme" << YAML::Value << hjb::to_string(h.options.scheme);
    e << YAML::Key << "gap_axis" << YAML::Value << h.options.gap_axis;
    e << YAML::Key << "sliding_projection" << YAML::Value << h.options.sliding_projection;
    e << YAML::Key << "eliminate_exogenous" << YAML::Value << h.options.eliminate_exogenous;
    e << YAML::Key << "max_dim" << YAML::Value << h.options.max_dim;
    e << YAML::Key << "threads" << YAML::Value << h.options.threads;
    e << YAML::Key << "synthesize" << YAML::Value << h.synthesize;
    e << YAML::Key << "export" << YAML::Value << h.value_export;
    e << YAML::EndMap;
  }

  e << YAML::Key << "oracle" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "deltas" << YAML::Value << YAML::Flow << exp.oracle.deltas;
  e << YAML::Key << "max_step" << YAML::Value << exp.oracle.max_step;
  e << YAML::EndMap;

  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

// ---------------------------------------------------------------- verbs

int run_solve(const Experiment& exp, const fs::path& out, unsigned seed, std::ostream& log) {
  if (!exp.has_reformulation) throw ConfigError(exp.source + ": 'reformulation' section is required for solve");
  if (exp.reformulation.tag == Formulation::P3)
    throw ConfigError(exp.source + ": P3 has a discontinuous right-hand side; use the hjb verb or P3theta");
  const ProblemSpec spec = exp.problem.build();
  direct::SolverConfig cfg = exp.solver;
  cfg.seed = seed;
  const std::string config_text = resolved_yaml(exp, seed);
  const std::string hash = config_hash(config_text);

  prepare_out(out);
  write_text(out / "config.yaml", config_text);
  const auto tp = direct::transcribe(spec, exp.reformulation.build(), cfg.mesh, cfg.integrator);
  const direct::SolveReport report = direct::solve(tp, cfg);
  write_json(out / "report.json", report_json(report, hash, seed, spec));
  write_series(out / "series.csv", report.trajectory);
  log << report.problem << ' ' << report.kind << ": objective " << number(report.objective) << ", peak "
      << number(report.peak) << ", violation " << number(report.violation) << ", "
      << direct::to_string(report.bound_role) << '\n';
  if (!report.success) {
    log << "solver failure: " << report.diagnostics << '\n';
    return kExitSolverFailure;
  }
  return kExitOk;
}

int run_sweep(const Experiment& exp, const fs::path& out, unsigned seed, std::ostream& log) {
  if (!exp.sweep.present) throw ConfigError(exp.source + ": 'sweep' section is required for sweep");
  if (exp.sweep.values.empty()) throw ConfigError(exp.source + ": sweep.values is empty");
  const ProblemSpec spec = exp.problem.build();
  direct::SolverConfig cfg = exp.solver;
  cfg.seed = seed;
  const std::string config_text = resolved_yaml(exp, seed);
  const std::string hash = config_hash(config_text);

  std::vector<ReformulationKind> kinds;
  for (Formulation f : exp.sweep.upper) {
    ReformulationSection sec;
    sec.tag = f;
    kinds.push_back(sec.build());
  }
  const std::size_t first_sweep = kinds.size();
  for (double v : exp.sweep.values) {
    if (exp.sweep.parameter == "theta")
      kinds.push_back(ReformulationKind::p3theta(params_from_epsilon(v, exp.sweep.lambda1)));
    else
      kinds.push_back(ReformulationKind::lp(static_cast<int>(v)));
  }

  prepare_out(out);
  write_text(out / "config.yaml", config_text);
  const std::vector<direct::SolveReport> reports = direct::continuation_solve(spec, kinds, cfg);

  json summary;
  summary["problem"] = spec.name;
  summary["parameter"] = exp.sweep.parameter;
  summary["values"] = exp.sweep.values;
  summary["config_hash"] = hash;
  json items = json::array();
  bool all_ok = true;
  std::vector<direct::SolveReport> lower, upper;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    char dir[64];
    std::snprintf(dir, sizeof dir, "%02zu_%s", i, label(kinds[i]).c_str());
    const fs::path item = out / "items" / dir;
    fs::create_directories(item);
    write_json(item / "report.json", report_json(r, hash, seed, spec));
    if (r.trajectory.times.size() > 1) write_series(item / "series.csv", r.trajectory);
    all_ok = all_ok && r.success;
    json entry;
    entry["dir"] = std::string("items/") + dir;
    entry["kind"] = r.kind;
    entry["stage"] = i < first_sweep ? "upper" : "sweep";
    entry["objective"] = finite_or_null(r.objective);
    entry["peak"] = finite_or_null(r.peak);
    entry["violation"] = finite_or_null(r.violation);
    entry["bound_role"] = direct::to_string(r.bound_role);
    entry["success"] = r.success;
    items.push_back(entry);
    if (r.bound_role == direct::BoundRole::lower) lower.push_back(r);
    if (r.bound_role == direct::BoundRole::upper) upper.push_back(r);
    log << r.kind << ": objective " << number(r.objective) << ", peak " << number(r.peak) << ", "
        << direct::to_string(r.bound_role) << '\n';
  }
  summary["items"] = items;

  // Lower-bound objectives must not decrease along the theta sweep.
  if (exp.sweep.parameter == "theta") {
    bool monotone = true;
    for (std::size_t i = first_sweep + 1; i < reports.size(); ++i)
      if (reports[i].objective < reports[i - 1].objective - exp.sweep.monotone_tol) monotone = false;
    summary["monotone"] = monotone;
    summary["monotone_tol"] = exp.sweep.monotone_tol;
    if (!monotone) log << "warning: theta sweep objectives decrease beyond tolerance (under-converged solves?)\n";
  }

  if (!lower.empty() && !upper.empty()) {
    json b;
    b["tolerance"] = exp.sweep.bracket_tol;
    try {
      const direct::Bracket br = direct::bracket(lower, upper, exp.sweep.bracket_tol);
      b["lower"] = br.lower;
      b["upper"] = br.upper;
      b["width"] = br.width();
      b["consistent"] = true;
    } catch (const InconsistencyError& e) {
      b["lower"] = e.lower();
      b["upper"] = e.upper();
      b["width"] = e.upper() - e.lower();
      b["consistent"] = false;
      b["inconsistency"] = e.what();
      log << "warning: " << e.what() << '\n';
    }
    write_json(out / "bracket.json", b);
    summary["bracket"] = b;
  }
  write_json(out / "sweep.json", summary);
  return all_ok ? kExitOk : kExitSolverFailure;
}

int run_hjb(const Experiment& exp, const fs::path& out, unsigned seed, std::ostream& log) {
  if (!exp.hjb.present) throw ConfigError(exp.source + ": 'hjb' section is required for hjb");
  const HjbSection& h = exp.hjb;
  const ProblemSpec spec = exp.problem.build();
  const ReformulationKind kind = h.kind == Formulation::P1 ? ReformulationKind::p1() : ReformulationKind::p3();
  if (static_cast<int>(h.counts.size()) > h.options.max_dim)
    throw ConfigError(exp.source + ": hjb grid has " + std::to_string(h.counts.size()) +
                      " dimensions, above max_dim = " + std::to_string(h.options.max_dim) +
                      "; raise hjb.max_dim if the memory and run time are acceptable");
  const int needed = hjb::required_grid_dim(spec, kind, h.steps, h.options);
  if (needed != static_cast<int>(h.counts.size()))
    throw ConfigError(exp.source + ": hjb.counts has " + std::to_string(h.counts.size()) +
                      " entries but " + spec.name + " with " + to_string(h.kind) + " needs a " +
                      std::to_string(needed) + "-dimensional grid");
  if (needed > h.options.max_dim)
    throw ConfigError(exp.source + ": the problem needs a " + std::to_string(needed) + "-dimensional grid, above max_dim");

  const std::string config_text = resolved_yaml(exp, seed);
  const std::string hash = config_hash(config_text);
  const hjb::Grid grid = h.lower.empty()
                             ? hjb::reachable_grid(spec, kind, h.steps, h.counts, h.options, h.padding, 64, seed)
                             : hjb::Grid(h.lower, h.upper, h.counts);

  prepare_out(out);
  write_text(out / "config.yaml", config_text);
  const auto t0 = std::chrono::steady_clock::now();
  const hjb::ValueFunction vf = hjb::backward_sweep(spec, kind, grid, h.steps, h.options);
  std::optional<hjb::Synthesis> syn;
  if (h.synthesize) syn = hjb::synthesize(vf, spec, ExtendedSystem(spec, kind).initial());
  const double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  const ExtendedSystem sys(spec, kind);
  std::vector<std::string> axis_names;
  for (int a : vf.axes) {
    if (a < sys.n()) axis_names.push_back("x" + std::to_string(a));
    else if (a == sys.y_index()) axis_names.push_back("y");
    else if (a == sys.z_index()) axis_names.push_back(h.options.gap_axis ? "z_minus_y" : "z");
    else axis_names.push_back("C");
  }

  json j;
  j["problem"] = spec.name;
  j["kind"] = to_string(h.kind);
  j["objective"] = finite_or_null(vf.initial_value);
  j["peak"] = syn ? finite_or_null(peak(syn->trajectory)) : json(nullptr);
  j["violation"] = 0.0;
  j["bound_role"] = "heuristic";
  j["iterations"] = h.steps;
  j["wall_ms"] = wall_ms;
  j["config_hash"] = hash;
  j["success"] = std::isfinite(vf.initial_value);
  j["seed"] = seed;
  j["initial_value"] = finite_or_null(vf.initial_value);
  if (syn) j["synthesized_terminal_z"] = finite_or_null(syn->terminal_z);
  j["out_of_domain"] = vf.out_of_domain;
  json g;
  g["axes"] = axis_names;
  std::vector<double> lo, hi;
  for (int d = 0; d < grid.dim(); ++d) {
    lo.push_back(grid.lower(d));
    hi.push_back(grid.upper(d));
  }
  g["lower"] = lo;
  g["upper"] = hi;
  g["counts"] = h.counts;
  g["exogenous_eliminated"] = !vf.exogenous.empty();
  j["grid"] = g;
  write_json(out / "report.json", j);

  const std::vector<double>& v0 = vf.layer(0);
  if (h.value_export == "csv") {
    std::ostringstream csv;
    for (const auto& name : axis_names) csv << name << ',';
    csv << "value\n";
    std::vector<double> q(static_cast<std::size_t>(grid.dim()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid.point(i, q.data());
      for (double c : q) csv << number(c) << ',';
      csv << (std::isfinite(v0[i]) ? number(v0[i]) : "inf") << '\n';
    }
    write_text(out / "value.csv", csv.str());
  } else if (h.value_export == "binary") {
    std::ofstream bin(out / "value.bin", std::ios::binary);
    bin.write(reinterpret_cast<const char*>(v0.data()), static_cast<std::streamsize>(v0.size() * sizeof(double)));
    json meta = g;
    meta["layout"] = "float64, native byte order, first axis fastest, initial time";
    write_json(out / "value.json", meta);
  }
  if (syn) write_series(out / "series.csv", syn->trajectory);
  log << spec.name << ' ' << to_string(h.kind) << " HJB: V(0) " << number(vf.initial_value);
  if (syn) log << ", synthesized peak " << number(peak(syn->trajectory));
  log << ", clamped feet " << vf.out_of_domain << '\n';
  return std::isfinite(vf.initial_value) ? kExitOk : kExitSolverFailure;
}

int run_oracle(const Experiment& exp, const fs::path& out, unsigned seed, std::ostream& log) {
  if (exp.problem.name != "toy")
    throw ConfigError(exp.source + ": the oracle verb supports the toy problem only");
  const std::string config_text = resolved_yaml(exp, seed);
  const std::string hash = config_hash(config_text);
  prepare_out(out);
  write_text(out / "config.yaml", config_text);

  const auto t0 = std::chrono::steady_clock::now();
  Trajectory traj = toy_switched_trajectory(0.0, exp.oracle.max_step);
  const auto rows = perturb_switch_times(exp.oracle.deltas, exp.oracle.max_step);
  const double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  traj.z_values = running_max_envelope(traj.y_values);
  traj.controls = ControlSignal::sample(traj.times.back(), static_cast<int>(traj.times.size()) - 1, 1,
                                        [](double t) { return make_vec({toy_optimal_control(t)}); });
  // v = 1 exactly where y sits below its running maximum.
  std::vector<double> v;
  for (int k = 0; k < traj.controls.mesh_size(); ++k)
    v.push_back(traj.y_values[static_cast<std::size_t>(k)] < traj.z_values[static_cast<std::size_t>(k)] ? 1.0 : 0.0);
  traj.aux_controls = v;
  const double value = peak(traj);

  json j;
  j["problem"] = "toy";
  j["kind"] = "exact";
  j["objective"] = traj.z_values.back();
  j["peak"] = value;
  j["violation"] = 0.0;
  j["bound_role"] = "upper";
  j["iterations"] = 0;
  j["wall_ms"] = wall_ms;
  j["config_hash"] = hash;
  j["success"] = true;
  j["seed"] = seed;
  j["switch_times"] = toy_switch_times();
  json sens = json::array();
  for (const auto& row : rows) sens.push_back({{"delta", row.delta}, {"peak", row.peak}, {"relative_error", row.relative_error}});
  j["sensitivity"] = sens;
  write_json(out / "report.json", j);
  write_series(out / "series.csv", traj);

  std::ostringstream s;
  s << "delta,peak,relative_error\n";
  for (const auto& row : rows) s << number(row.delta) << ',' << number(row.peak) << ',' << number(row.relative_error) << '\n';
  write_text(out / "sensitivity.csv", s.str());

  std::ostringstream iv;
  iv << "start,end\n";
  for (const auto& [a, b] : invisible_intervals(traj.y_values)) iv << number(traj.times[a]) << ',' << number(traj.times[b]) << '\n';
  write_text(out / "intervals.csv", iv.str());

  log << "toy exact control: peak " << number(value) << ", switches at 1, 2, 4\n";
  for (const auto& row : rows)
    log << "  delta " << number(row.delta) << ": peak " << number(row.peak) << " (relative error "
        << number(row.relative_error) << ")\n";
  return kExitOk;
}

}  // namespace peakopt::cli
