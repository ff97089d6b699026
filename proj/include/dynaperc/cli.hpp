#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dynaperc/dist.hpp"
#include "dynaperc/error.hpp"

namespace dynaperc::cli {

inline const std::vector<std::string> kSubcommands = {"env-sim", "walk-sim", "mix", "hit", "evoset",
                                                      "expansion", "bound", "lab", "sweep"};

/// Scenarios accepted by a subcommand; the first is the default.
std::vector<std::string> scenarios_for(const std::string& subcommand);

struct FieldError {
  std::string field;  // section.key
  std::string message;
};

class ConfigError : public InputError {
 public:
  explicit ConfigError(std::vector<FieldError> errors);
  const std::vector<FieldError>& errors() const { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

/// Everything that determines a run. `out` and the worker cap do not enter the hash.
struct ExperimentConfig {
  std::string subcommand;
  std::string scenario;

  // [grid]
  std::vector<unsigned> d{1};
  std::vector<unsigned> n{8};
  std::vector<double> p{0.5};
  std::vector<double> mu{0.5};
  std::vector<double> eps{0.25};
  std::vector<double> beta{0.1};
  std::vector<double> sigma{0.1};

  // [run]
  std::vector<std::uint64_t> seeds{1};
  dist::Mode mode = dist::Mode::Exact;
  double budget = 0.0;  // seconds per cell, 0 = unlimited
  std::string out = "results";

  // [samples]
  std::size_t envs = 10;
  std::size_t replicas = 10000;
  std::size_t instances = 20;
  std::size_t paths = 1000;

  // [options]
  double horizon = 10.0;         // env-sim, walk-sim
  double horizon_factor = 3.0;   // scaling horizons in units of n^2 / mu
  double resolution = 200.0;     // mixing grid step = n^2 / (mu * resolution)
  double tail_constant = 1.0;    // quenched-tail threshold C n^2 log(1/eps) / mu
  double concentration = 0.95;   // lower-bound beta0 criterion
  std::string init = "stationary";
  std::string profile;           // bound: optional profile file

  /// Stable key=value rendering used for the hash.
  std::string canonical() const;
  std::string hash() const;  // first 16 hex digits of SHA-256(canonical)
};

struct Overrides {
  std::optional<std::string> scenario;
  std::optional<std::string> config_path;
  std::optional<std::string> config_text;  // in-memory INI, used instead of a file
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> budget;
  std::optional<std::string> out;
};

/// Defaults for the subcommand and scenario, then the INI file, then flags.
/// Collects every parse and validation problem into one ConfigError.
ExperimentConfig build_config(const std::string& subcommand, const Overrides& overrides = {});

std::vector<FieldError> validate(const ExperimentConfig& config);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

struct Check {
  std::string name;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool pass = false;
};

struct CellOutcome {
  std::string id;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | failed | censored
  bool pass = true;           // assertions made inside the cell
  std::string message;
  double seconds = 0.0;
  std::vector<dist::Record> records;
  std::vector<std::string> artifacts;  // relative paths written by the cell
};

struct RunResult {
  std::string config_hash;
  std::vector<CellOutcome> cells;
  std::vector<Check> checks;  // run-level assertions (fits)
  std::vector<std::pair<std::string, std::string>> files;  // relative path, digest
  int exit_code = 0;
};

/// Runs every cell (concurrently up to DYNAPERC_WORKERS), writes
/// <out>/<name>.csv and <out>/manifest.jsonl, and returns the summary.
/// Exit code 0 iff every cell succeeded and every assertion passed.
RunResult run(const ExperimentConfig& config, std::ostream& log);

}  // namespace dynaperc::cli
