#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "dynaperc/cli.hpp"
#include "dynaperc/dynenv.hpp"
#include "dynaperc/walk.hpp"

namespace dynaperc::cli {

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
  std::string out = "invalid configuration:";
  for (const auto& e : errors) out += "\n  " + e.field + ": " + e.message;
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

template <class T>
bool parse_list(const std::string& text, std::vector<T>& out) {
  std::vector<T> values;
  for (const auto& item : split_list(text)) {
    T v{};
    if (!parse_number(item, v)) return false;
    values.push_back(v);
  }
  if (values.empty()) return false;
  out = std::move(values);
  return true;
}

std::string render(double v) { return dist::format_number(v); }

template <class T>
std::string render_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += render(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

void set_defaults(ExperimentConfig& c) {
  const auto& s = c.subcommand;
  const auto& sc = c.scenario;
  if (s == "env-sim") {
    c.n = {16};
  } else if (s == "walk-sim") {
    c.horizon = 5.0;
  } else if (s == "mix") {
    c.n = {8, 16};
  } else if (s == "hit") {
    c.n = {8, 16};
    c.horizon_factor = 4.0;
  } else if (s == "evoset") {
    c.instances = 200;
    c.eps = {0.1};
  } else if (s == "expansion") {
    c.n = {16};
    c.mu = {0.25};
    c.envs = 100;
  } else if (s == "bound") {
    c.eps = {0.1};
    c.instances = 4;
    if (sc == "torus") {
      c.n = {16, 32, 64};
      c.mu = {0.5, 0.25};
      c.eps = {0.1, 0.01};
    }
  } else if (s == "sweep") {
    if (sc == "subcritical-mixing" || sc == "hitting") {
      c.n = {8, 16, 32};
      c.mu = {0.5, 0.125};
      c.envs = 30;
      c.horizon_factor = sc == "hitting" ? 4.0 : 3.0;
    } else if (sc == "quenched-tail") {
      c.n = {8, 16};
      c.mu = {0.5, 0.125};
      c.eps = {0.25, 0.1};
      c.envs = 30;
    } else if (sc == "lower-bound") {
      c.n = {16};
      c.mu = {1.0 / 64.0};
      c.beta = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
      c.envs = 50;
    }
  }
}

using Setter = bool (*)(ExperimentConfig&, const std::string&);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.scenario", [](ExperimentConfig& c, const std::string& v) { c.scenario = v; return !v.empty(); }},
      {"run.seeds", [](ExperimentConfig& c, const std::string& v) { return parse_list(v, c.seeds); }},
      {"run.mode",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.mode = dist::parse_mode(v);
           return true;
         } catch (const InputError&) {
           return false;
         }
       }},
      {"run.budget", [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.budget); }},
      {"run.out", [](ExperimentConfig& c, const std::string& v) { c.out = v; return !v.empty(); }},
      {"grid.d", [](ExperimentConfig& c, const std::string& v) { return parse_list(v, c.d); }},
      {"grid.n", [](ExperimentConfig& c, const std::string& v) { return parse_list(v, c.n); }},
      {"grid.p", [](ExperimentConfig& c, const std::string& v) { return parse_list(v, c.p); }},
      {"grid.mu", [](ExperimentConfig& c, const std::string& v) { return parse_list(v, c.mu); }},
      {"grid.eps", [](ExperimentConfig& c, const std::string& v) { return parse_list(v, c.eps); }},
      {"grid.beta", [](ExperimentConfig& c, const std::string& v) { return parse_list(v, c.beta); }},
      {"grid.sigma", [](ExperimentConfig& c, const std::string& v) { return parse_list(v, c.sigma); }},
      {"samples.envs", [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.envs); }},
      {"samples.replicas", [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.replicas); }},
      {"samples.instances", [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.instances); }},
      {"samples.paths", [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.paths); }},
      {"options.horizon", [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.horizon); }},
      {"options.horizon_factor",
       [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.horizon_factor); }},
      {"options.resolution", [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.resolution); }},
      {"options.tail_constant",
       [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.tail_constant); }},
      {"options.concentration",
       [](ExperimentConfig& c, const std::string& v) { return parse_number(v, c.concentration); }},
      {"options.init", [](ExperimentConfig& c, const std::string& v) { c.init = v; return !v.empty(); }},
      {"options.profile", [](ExperimentConfig& c, const std::string& v) { c.profile = v; return !v.empty(); }},
  };
  return table;
}

// Flattened "section.key" -> value, in file order.
std::vector<std::pair<std::string, std::string>> read_ini_entries(std::istream& in, std::vector<FieldError>& errors) {
  std::vector<std::pair<std::string, std::string>> out;
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    errors.push_back({"config", "line " + std::to_string(e.line()) + ": " + e.message()});
    return out;
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      errors.push_back({section, "keys must live inside a [section]"});
      continue;
    }
    for (const auto& [key, value] : body) out.emplace_back(section + "." + key, trim(value.data()));
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<FieldError> errors)
    : InputError(join_errors(errors)), errors_(std::move(errors)) {}

std::vector<std::string> scenarios_for(const std::string& subcommand) {
  if (subcommand == "evoset") return {"lemmas"};
  if (subcommand == "expansion") return {"lemma-bound"};
  if (subcommand == "bound") return {"theorem", "torus", "profile"};
  if (subcommand == "lab") return {"counterexample", "convexity"};
  if (subcommand == "sweep") return {"subcritical-mixing", "hitting", "quenched-tail", "lower-bound"};
  if (std::find(kSubcommands.begin(), kSubcommands.end(), subcommand) != kSubcommands.end()) return {"default"};
  return {};
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  o << "subcommand=" << subcommand << '\n'
    << "scenario=" << scenario << '\n'
    << "d=" << render_list(d) << '\n'
    << "n=" << render_list(n) << '\n'
    << "p=" << render_list(p) << '\n'
    << "mu=" << render_list(mu) << '\n'
    << "eps=" << render_list(eps) << '\n'
    << "beta=" << render_list(beta) << '\n'
    << "sigma=" << render_list(sigma) << '\n'
    << "seeds=" << render_list(seeds) << '\n'
    << "mode=" << dist::to_string(mode) << '\n'
    << "budget=" << render(budget) << '\n'
    << "envs=" << envs << '\n'
    << "replicas=" << replicas << '\n'
    << "instances=" << instances << '\n'
    << "paths=" << paths << '\n'
    << "horizon=" << render(horizon) << '\n'
    << "horizon_factor=" << render(horizon_factor) << '\n'
    << "resolution=" << render(resolution) << '\n'
    << "tail_constant=" << render(tail_constant) << '\n'
    << "concentration=" << render(concentration) << '\n'
    << "init=" << init << '\n'
    << "profile=" << profile << '\n';
  return o.str();
}

std::string ExperimentConfig::hash() const { return sha256_hex(canonical()).substr(0, 16); }

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr)) {
    throw std::runtime_error("SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

ExperimentConfig build_config(const std::string& subcommand, const Overrides& overrides) {
  std::vector<FieldError> errors;
  if (scenarios_for(subcommand).empty()) throw ConfigError({{"subcommand", "unknown subcommand '" + subcommand + "'"}});

  std::vector<std::pair<std::string, std::string>> entries;
  if (overrides.config_text) {
    std::istringstream in(*overrides.config_text);
    entries = read_ini_entries(in, errors);
  } else if (overrides.config_path) {
    std::ifstream in(*overrides.config_path);
    if (!in) {
      errors.push_back({"--config", "cannot open '" + *overrides.config_path + "'"});
    } else {
      entries = read_ini_entries(in, errors);
    }
  }

  // The scenario picks the defaults, so resolve it before anything else.
  ExperimentConfig c;
  c.subcommand = subcommand;
  c.scenario = scenarios_for(subcommand).front();
  for (const auto& [key, value] : entries) {
    if (key == "run.scenario") c.scenario = value;
  }
  if (overrides.scenario) c.scenario = *overrides.scenario;
  set_defaults(c);

  std::set<std::string> seen;
  for (const auto& [key, value] : entries) {
    if (!seen.insert(key).second) {
      errors.push_back({key, "given more than once"});
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) {
      errors.push_back({key, "unknown key"});
    } else if (key != "run.scenario" && !it->second(c, value)) {
      errors.push_back({key, "cannot parse '" + value + "'"});
    }
  }
  if (overrides.scenario) c.scenario = *overrides.scenario;
  if (overrides.seed) c.seeds = {*overrides.seed};
  if (overrides.mode) {
    try {
      c.mode = dist::parse_mode(*overrides.mode);
    } catch (const InputError& e) {
      errors.push_back({"--mode", e.what()});
    }
  }
  if (overrides.budget) c.budget = *overrides.budget;
  if (overrides.out) c.out = *overrides.out;

  auto more = validate(c);
  errors.insert(errors.end(), more.begin(), more.end());
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

std::vector<FieldError> validate(const ExperimentConfig& c) {
  std::vector<FieldError> e;
  auto need = [&](bool ok, const std::string& field, const std::string& message) {
    if (!ok) e.push_back({field, message});
  };
  const auto valid = scenarios_for(c.subcommand);
  need(std::find(valid.begin(), valid.end(), c.scenario) != valid.end(), "run.scenario",
       "'" + c.scenario + "' is not a scenario of " + c.subcommand);

  const auto& s = c.subcommand;
  const bool torus_walk = s == "mix" || s == "hit" || s == "sweep" || s == "walk-sim" || s == "expansion";
  const bool needs_motion = s == "mix" || s == "hit" || s == "sweep";

  for (unsigned d : c.d) need(d >= 1 && d <= 4, "grid.d", "dimension must be in 1..4, got " + std::to_string(d));
  for (unsigned n : c.n) need(n >= 3, "grid.n", "side length must be >= 3, got " + std::to_string(n));
  for (double p : c.p) need(p >= 0.0 && p <= 1.0, "grid.p", "p must be in [0, 1], got " + render(p));
  for (double mu : c.mu) {
    need(std::isfinite(mu) && mu >= 0.0, "grid.mu", "mu must be >= 0, got " + render(mu));
    if (needs_motion) need(mu > 0.0, "grid.mu", "this scenario scales with 1/mu, so mu must be > 0");
    if (s == "expansion") need(mu <= 0.5, "grid.mu", "the expansion lower bound assumes mu <= 1/2");
  }
  for (double x : c.eps) need(x > 0.0 && x < 1.0, "grid.eps", "eps must be in (0, 1), got " + render(x));
  for (double b : c.beta) need(b > 0.0 && std::isfinite(b), "grid.beta", "beta must be > 0, got " + render(b));
  for (double x : c.sigma) need(x > 0.0 && x <= 1.0, "grid.sigma", "sigma must be in (0, 1], got " + render(x));
  need(!c.seeds.empty(), "run.seeds", "at least one seed");
  need(c.budget >= 0.0 && std::isfinite(c.budget), "run.budget", "budget must be >= 0 seconds");
  need(c.envs >= 1, "samples.envs", "need at least one environment");
  need(c.replicas >= 1, "samples.replicas", "need at least one replica");
  need(c.instances >= 1, "samples.instances", "need at least one instance");
  need(c.paths >= 1, "samples.paths", "need at least one path");
  need(c.horizon > 0.0, "options.horizon", "horizon must be > 0");
  need(c.horizon_factor > 0.0, "options.horizon_factor", "must be > 0");
  need(c.resolution >= 1.0, "options.resolution", "must be >= 1");
  need(c.tail_constant > 0.0, "options.tail_constant", "must be > 0");
  need(c.concentration > 0.0 && c.concentration <= 1.0, "options.concentration", "must be in (0, 1]");
  try {
    const auto kind = dynenv::parse_init_kind(c.init);
    need(kind != dynenv::InitKind::Explicit, "options.init", "explicit initial states cannot be configured");
  } catch (const InputError& err) {
    e.push_back({"options.init", err.what()});
  }

  const bool exact_only = s == "hit" || (s == "sweep" && (c.scenario == "hitting" || c.scenario == "lower-bound")) ||
                          s == "expansion" || s == "evoset" || s == "lab" || (s == "bound" && c.scenario != "theorem");
  if (exact_only) need(c.mode == dist::Mode::Exact, "run.mode", c.subcommand + " " + c.scenario + " runs in exact mode only");
  if (s == "bound" && c.scenario == "profile") need(!c.profile.empty(), "options.profile", "required for scenario 'profile'");

  // Per-cell preconditions, checked before anything runs.
  if (torus_walk) {
    for (unsigned d : c.d) {
      for (unsigned n : c.n) {
        if (d < 1 || d > 4 || n < 3) continue;
        const double states = std::pow(static_cast<double>(n), d);
        const std::string cell = "d=" + std::to_string(d) + ", n=" + std::to_string(n);
        const bool exact_walk = s == "hit" || (s == "mix" && c.mode == dist::Mode::Exact) ||
                                (s == "sweep" && c.scenario != "lower-bound" &&
                                 !(c.scenario == "subcritical-mixing" && c.mode == dist::Mode::MonteCarlo));
        if (exact_walk) {
          need(states <= static_cast<double>(walk::kDefaultStateBudget), "grid.n",
               cell + ": exact evolution is limited to " + std::to_string(walk::kDefaultStateBudget) + " vertices");
        }
        if (s == "expansion") {
          need(d == 1 || states <= static_cast<double>(torus::kIsoEnumerationLimit), "grid.n",
               cell + ": the isoperimetric constant needs n^d <= " + std::to_string(torus::kIsoEnumerationLimit));
        }
      }
    }
  }
  if (s == "bound" && c.scenario == "torus") {
    for (double mu : c.mu) need(mu > 0.0, "grid.mu", "the analytic profile scales with mu^2, so mu must be > 0");
    for (unsigned d : c.d) {
      for (unsigned n : c.n) {
        need(d == 1 || std::pow(static_cast<double>(n), d) <= static_cast<double>(torus::kIsoEnumerationLimit),
             "grid.n", "d=" + std::to_string(d) + ", n=" + std::to_string(n) +
                           ": the isoperimetric constant needs n^d <= " + std::to_string(torus::kIsoEnumerationLimit));
      }
    }
  }
  return e;
}

}  // namespace dynaperc::cli
