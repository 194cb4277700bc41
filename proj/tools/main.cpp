#include <iostream>

#include "CLI11.hpp"
#include "experiment.hpp"

namespace cli = peakopt::cli;

int main(int argc, char** argv) {
  CLI::App app{"Peak minimization experiments"};
  app.require_subcommand(1);
  std::string config;
  std::string out;
  unsigned seed = 0;
  bool seed_given = false;
  auto add_verb = [&](const char* name, const char* help) {
    CLI::App* verb = app.add_subcommand(name, help);
    verb->add_option("--config", config, "experiment configuration (YAML)")->required();
    verb->add_option("--out", out, "output directory")->required();
    verb->add_option("--seed", seed, "random seed for multistarts and reachable-set probes")
        ->each([&](const std::string&) { seed_given = true; });
    return verb;
  };
  CLI::App* solve = add_verb("solve", "solve one reformulation by direct transcription");
  CLI::App* sweep = add_verb("sweep", "warm-started theta or p sweep with bracket");
  CLI::App* hjb = add_verb("hjb", "backward dynamic programming on a state grid");
  CLI::App* oracle = add_verb("oracle", "exact control, envelope and switch-time sensitivity of the toy problem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitUsage;
  }

  try {
    const cli::Experiment exp = cli::load_experiment(config);
    if (!seed_given) seed = exp.seed.value_or(0);
    if (solve->parsed()) return cli::run_solve(exp, out, seed, std::cout);
    if (sweep->parsed()) return cli::run_sweep(exp, out, seed, std::cout);
    if (hjb->parsed()) return cli::run_hjb(exp, out, seed, std::cout);
    if (oracle->parsed()) return cli::run_oracle(exp, out, seed, std::cout);
  } catch (const peakopt::ConfigurationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitSolverFailure;
  }
  return cli::kExitUsage;
}
