#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "dynaperc/cli.hpp"

int main(int argc, char** argv) {
  using namespace dynaperc::cli;
  CLI::App app{"Random walk on dynamical percolation: simulation and verification runs"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config, mode, out, scenario;
  std::uint64_t seed = 0;
  double budget = 0.0;
  const std::map<std::string, std::string> about{
      {"env-sim", "simulate environments, dump them and check the edge law"},
      {"walk-sim", "simulate walks and compare Monte Carlo with exact laws"},
      {"mix", "quenched mixing times on the torus"},
      {"hit", "quenched hitting times of a half-size set"},
      {"evoset", "exact evolving-set identities on random finite chains"},
      {"expansion", "window expansion against the torus lower bound"},
      {"bound", "integral mixing bounds (theorem, torus, profile)"},
      {"lab", "environment-chain laboratory (counterexample, convexity)"},
      {"sweep", "scaling sweeps and fits (subcritical-mixing, hitting, quenched-tail, lower-bound)"}};
  for (const auto& name : kSubcommands) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config, "INI file with [run], [grid], [samples], [options] sections");
    sub->add_option("--seed", seed, "master seed (replaces run.seeds)");
    sub->add_option("--mode", mode, "exact or mc")->check(CLI::IsMember({"exact", "mc"}));
    sub->add_option("--budget", budget, "wall-clock cap per cell in seconds (0 = none)");
    sub->add_option("--out", out, "output directory");
    const auto scen = scenarios_for(name);
    if (scen.size() > 1 || scen.front() != "default") {
      sub->add_option("--scenario", scenario, "one of the scenarios below")->check(CLI::IsMember(scen));
    }
  }
  CLI11_PARSE(app, argc, argv);

  const auto* chosen = app.get_subcommands().front();
  auto given = [&](const char* flag) { return chosen->count(flag) > 0; };
  if (given("--config")) ov.config_path = config;
  if (given("--seed")) ov.seed = seed;
  if (given("--mode")) ov.mode = mode;
  if (given("--budget")) ov.budget = budget;
  if (given("--out")) ov.out = out;
  if (chosen->get_option_no_throw("--scenario") && given("--scenario")) ov.scenario = scenario;

  try {
    const auto cfg = build_config(chosen->get_name(), ov);
    return run(cfg, std::cout).exit_code;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
