#pragma once

// Experiment configuration (YAML) and the four CLI verbs.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "peakopt/direct/solver.hpp"
#include "peakopt/hjb.hpp"
#include "peakopt/problems.hpp"

namespace peakopt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSolverFailure = 1;
inline constexpr int kExitUsage = 2;

/// Invalid configuration; the message starts with "file:line:column:" when a
/// location is known.
class ConfigError : public ConfigurationError {
 public:
  using ConfigurationError::ConfigurationError;
};

struct ProblemSection {
  std::string name = "toy";
  double toy_horizon = 5.0;
  SirParameters sir;

  ProblemSpec build() const;
};

struct ReformulationSection {
  Formulation tag = Formulation::P1;
  double epsilon = 0.05;  // P3theta
  double lambda1 = 5000.0;
  int p = 2;  // Lp
  std::optional<double> max_smoothing;  // softplus sharpness for max(g, 0) in P1/P2

  ReformulationKind build() const;
};

struct SweepSection {
  bool present = false;
  std::string parameter = "theta";  // theta (values are epsilons) or p
  std::vector<double> values;
  std::vector<Formulation> upper{Formulation::P0, Formulation::P1};  // solved first, in order
  double lambda1 = 5000.0;
  double monotone_tol = 1e-6;
  double bracket_tol = 1e-3;
};

struct HjbSection {
  bool present = false;
  Formulation kind = Formulation::P3;
  std::vector<int> counts;
  int steps = 500;
  std::vector<double> lower;  // empty: reachable-set bounds
  std::vector<double> upper;
  double padding = 0.05;
  hjb::HjbOptions options;
  bool synthesize = true;
  std::string value_export = "csv";  // csv, binary or none
};

struct OracleSection {
  std::vector<double> deltas{1e-5, 1e-4, 1e-3};
  double max_step = 1e-3;
};

struct Experiment {
  int version = 1;
  std::string source;
  std::optional<unsigned> seed;  // used when the command line gives none
  ProblemSection problem;
  bool has_reformulation = false;
  ReformulationSection reformulation;
  direct::SolverConfig solver;
  SweepSection sweep;
  HjbSection hjb;
  OracleSection oracle;
};

/// Parses and validates a configuration file. Throws ConfigError.
Experiment load_experiment(const std::filesystem::path& path);
Experiment parse_experiment(const std::string& text, const std::string& source = "<config>");

/// Canonical YAML of the configuration with every default filled in.
std::string resolved_yaml(const Experiment& exp, unsigned seed);

/// 64-bit FNV-1a of `text`, as 16 hex digits.
std::string config_hash(const std::string& text);

int run_solve(const Experiment& exp, const std::filesystem::path& out, unsigned seed, std::ostream& log);
int run_sweep(const Experiment& exp, const std::filesystem::path& out, unsigned seed, std::ostream& log);
int run_hjb(const Experiment& exp, const std::filesystem::path& out, unsigned seed, std::ostream& log);
int run_oracle(const Experiment& exp, const std::filesystem::path& out, unsigned seed, std::ostream& log);

}  // namespace peakopt::cli
