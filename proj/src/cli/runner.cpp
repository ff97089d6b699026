#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dynaperc/cli.hpp"
#include "dynaperc/dynenv.hpp"
#include "dynaperc/envlab.hpp"
#include "dynaperc/expansion.hpp"
#include "dynaperc/parallel.hpp"
#include "dynaperc/rng.hpp"
#include "dynaperc/scenarios.hpp"
#include "dynaperc/walk.hpp"

#ifndef DYNAPERC_VERSION
#define DYNAPERC_VERSION "unknown"
#endif

namespace dynaperc::cli {

namespace {

namespace fs = std::filesystem;
using scenarios::Deadline;
using Json = nlohmann::ordered_json;

struct Cell {
  std::string id;
  std::uint64_t seed = 0;
  std::function<void(CellOutcome&, const Deadline&)> body;
};

// Groups of cells whose summaries are fitted together after the run.
struct FitGroup {
  std::string id;
  std::vector<std::size_t> cells;
};

std::string num(double v) { return dist::format_number(v); }

dist::Record rec(unsigned d, unsigned n, double p, double mu, double eps, const std::string& statistic, double value,
                 const std::string& method) {
  dist::Record r;
  r.d = d;
  r.n = n;
  r.p = p;
  r.mu = mu;
  r.eps = eps;
  r.statistic = statistic;
  r.value = value;
  r.ci_lo = r.ci_hi = value;
  r.method = method;
  return r;
}

std::string cell_id(unsigned d, unsigned n, double p, double mu, std::uint64_t seed) {
  return "d" + std::to_string(d) + "_n" + std::to_string(n) + "_p" + num(p) + "_mu" + num(mu) + "_s" +
         std::to_string(seed);
}

std::string output_name(const ExperimentConfig& c) {
  return c.scenario == "default" ? c.subcommand : c.subcommand + "-" + c.scenario;
}

class Planner {
 public:
  Planner(const ExperimentConfig& c, fs::path out) : c_(c), out_(std::move(out)) {}

  std::vector<Cell> cells;
  std::vector<FitGroup> groups;

  void plan() {
    const auto& s = c_.subcommand;
    if (s == "env-sim") return env_sim();
    if (s == "walk-sim") return walk_sim();
    if (s == "mix") return mixing(false);
    if (s == "hit") return hitting(false);
    if (s == "evoset") return evoset();
    if (s == "expansion") return expansion();
    if (s == "bound") return bound();
    if (s == "lab") return lab();
    if (c_.scenario == "subcritical-mixing") return mixing(true);
    if (c_.scenario == "hitting") return hitting(true);
    if (c_.scenario == "quenched-tail") return quenched_tail();
    return lower_bound();
  }

 private:
  const ExperimentConfig& c_;
  fs::path out_;

  template <class F>
  void torus_grid(F&& f) {
    for (auto seed : c_.seeds)
      for (unsigned d : c_.d)
        for (unsigned n : c_.n)
          for (double p : c_.p)
            for (double mu : c_.mu) f(seed, d, n, p, mu);
  }

  void env_sim() {
    torus_grid([&](std::uint64_t seed, unsigned d, unsigned n, double p, double mu) {
      const auto id = cell_id(d, n, p, mu, seed);
      cells.push_back({id, seed, [=, this](CellOutcome& out, const Deadline&) {
        const torus::TorusGraph g(d, n);
        const dynenv::DynParams params{p, mu, c_.horizon};
        const auto kind = dynenv::parse_init_kind(c_.init);
        const std::uint64_t env_seed = derive_seed(seed, kEnvStream);
        const auto env = dynenv::sample_env(g, params, {kind, {}}, env_seed);
        const auto rel = fs::path("env") / (id + ".bin");
        fs::create_directories(out_ / "env");
        std::ofstream dump(out_ / rel, std::ios::binary);
        dynenv::save_trajectory(env, dump);
        if (!dump) throw std::runtime_error("cannot write " + rel.string());
        out.artifacts.push_back(rel.generic_string());

        std::size_t open = 0;
        for (torus::EdgeId e = 0; e < g.edge_count(); ++e) open += env.state_at(e, c_.horizon) ? 1 : 0;
        const double frac = static_cast<double>(open) / static_cast<double>(g.edge_count());
        double expected = p;
        if (kind == dynenv::InitKind::AllClosed) expected = dynenv::edge_transition_prob(p, mu, c_.horizon, 0, 1);
        if (kind == dynenv::InitKind::AllOpen) expected = dynenv::edge_transition_prob(p, mu, c_.horizon, 1, 1);
        auto add = [&](const std::string& stat, double v, const std::string& method) {
          auto r = rec(d, n, p, mu, 0.0, stat, v, method);
          r.env_seed = env_seed;
          out.records.push_back(r);
        };
        add("flips", static_cast<double>(env.events().size()), "count");
        auto r = rec(d, n, p, mu, 0.0, "open_fraction_end", frac, "empirical");
        r.env_seed = env_seed;
        const auto ci = stats::wilson(open, g.edge_count());
        r.ci_lo = ci.lo;
        r.ci_hi = ci.hi;
        out.records.push_back(r);
        add("open_fraction_expected", expected, "closed-form");
        add("isolated_vertex_throughout", dynenv::isolated_vertex_exists(env, c_.horizon).exists ? 1.0 : 0.0,
            "exact");
      }});
    });
  }

  void walk_sim() {
    torus_grid([&](std::uint64_t seed, unsigned d, unsigned n, double p, double mu) {
      cells.push_back({cell_id(d, n, p, mu, seed), seed, [=, this](CellOutcome& out, const Deadline& deadline) {
        const torus::TorusGraph g(d, n);
        const std::uint64_t env_seed = derive_seed(seed, kEnvStream);
        const auto env = dynenv::sample_env(g, {p, mu, c_.horizon}, dynenv::EnvInit::stationary(), env_seed);
        const auto states = g.vertex_count();
        std::vector<double> counts(states, 0.0);
        std::size_t illegal = 0, done = 0;
        double jumps = 0.0;
        for (std::size_t r = 0; r < c_.replicas; ++r) {
          if (deadline.expired()) {
            out.status = "censored";
            break;
          }
          const auto path = walk::simulate_walk(env, 0, c_.horizon, derive_seed(seed ^ kWalkStream, r));
          if (!walk::path_is_legal(env, path)) ++illegal;
          counts[path.position_at(c_.horizon)] += 1.0;
          jumps += static_cast<double>(path.jumps.size());
          ++done;
        }
        auto add = [&](dist::Record r) {
          r.env_seed = env_seed;
          r.x = 0;
          out.records.push_back(r);
        };
        add(rec(d, n, p, mu, 0.0, "illegal_paths", static_cast<double>(illegal), "replay"));
        add(rec(d, n, p, mu, 0.0, "mean_jumps", done ? jumps / static_cast<double>(done) : 0.0, "mc"));
        out.pass = illegal == 0;
        if (done && states <= walk::kDefaultStateBudget) {
          dist::Dist emp(static_cast<Eigen::Index>(states));
          for (std::size_t y = 0; y < states; ++y) emp(static_cast<Eigen::Index>(y)) = counts[y] / static_cast<double>(done);
          const double tv = dist::tv(emp, walk::exact_quenched_distribution(env, 0, c_.horizon));
          // E[TV] <= sqrt(states / N) / 2, and TV has bounded differences 1/N.
          const double N = static_cast<double>(done);
          const double limit = 0.5 * std::sqrt(static_cast<double>(states) / N) + 3.0 / std::sqrt(N);
          auto r = rec(d, n, p, mu, 0.0, "empirical_tv_vs_exact", tv, "mc-vs-exact");
          r.ci_lo = 0.0;
          r.ci_hi = limit;
          add(r);
          out.pass = out.pass && tv <= limit;
        }
      }});
    });
  }

  void mixing(bool fit) {
    for (auto seed : c_.seeds)
      for (unsigned d : c_.d)
        for (double p : c_.p)
          for (double eps : c_.eps) {
            FitGroup group{"d" + std::to_string(d) + "_p" + num(p) + "_eps" + num(eps) + "_s" + std::to_string(seed), {}};
            for (unsigned n : c_.n)
              for (double mu : c_.mu) {
                group.cells.push_back(cells.size());
                const auto id = cell_id(d, n, p, mu, seed) + "_eps" + num(eps);
                cells.push_back({id, seed, [=, this](CellOutcome& out, const Deadline& deadline) {
                  scenarios::MixingOptions opt;
                  opt.horizon_factor = c_.horizon_factor;
                  opt.resolution = c_.resolution;
                  opt.mode = c_.mode;
                  opt.replicas = c_.replicas;
                  const auto cell = scenarios::mixing_cell(d, n, p, mu, eps, c_.envs, seed, opt, deadline);
                  const std::string stat = c_.mode == dist::Mode::Exact ? "tmix_worst" : "tmix_start0";
                  for (std::size_t i = 0; i < cell.values.size(); ++i) {
                    auto r = rec(d, n, p, mu, eps, stat, cell.values[i], cell.method);
                    r.env_seed = cell.env_seeds[i];
                    r.censored_frac = dist::mixed(cell.values[i]) ? 0.0 : 1.0;
                    out.records.push_back(r);
                  }
                  auto r = rec(d, n, p, mu, eps, "tmix_median", cell.summary, cell.method);
                  r.censored_frac = cell.censored_fraction;
                  out.records.push_back(r);
                  if (cell.censored) out.status = "censored";
                }});
              }
            if (fit) groups.push_back(group);
          }
  }

  void hitting(bool fit) {
    for (auto seed : c_.seeds)
      for (unsigned d : c_.d)
        for (double p : c_.p) {
          FitGroup group{"d" + std::to_string(d) + "_p" + num(p) + "_s" + std::to_string(seed), {}};
          for (unsigned n : c_.n)
            for (double mu : c_.mu) {
              group.cells.push_back(cells.size());
              cells.push_back({cell_id(d, n, p, mu, seed), seed, [=, this](CellOutcome& out, const Deadline& deadline) {
                const auto cell = scenarios::hitting_cell(d, n, p, mu, c_.envs, seed, c_.horizon_factor, deadline);
                for (std::size_t i = 0; i < cell.values.size(); ++i) {
                  auto r = rec(d, n, p, mu, 0.0, "hit_max_env", cell.values[i], cell.method);
                  r.env_seed = cell.env_seeds[i];
                  out.records.push_back(r);
                }
                auto r = rec(d, n, p, mu, 0.0, "hit_max_annealed", cell.summary, cell.method);
                r.x = cell.argmax;
                r.censored_frac = cell.censored_fraction;
                out.records.push_back(r);
                if (cell.censored) out.status = "censored";
              }});
            }
          if (fit) groups.push_back(group);
        }
  }

  void quenched_tail() {
    for (double eps : c_.eps)
      torus_grid([&](std::uint64_t seed, unsigned d, unsigned n, double p, double mu) {
          cells.push_back({cell_id(d, n, p, mu, seed) + "_eps" + num(eps), seed,
                           [=, this](CellOutcome& out, const Deadline&) {
            const torus::TorusGraph g(d, n);
            const double scale = static_cast<double>(n) * n / mu;
            const double threshold = c_.tail_constant * scale * std::log(1.0 / eps);
            const dynenv::DynParams params{p, mu, threshold};
            const auto rep = dist::quenched_tail(g, params, 0, eps, threshold, scale / c_.resolution,
                                                 {dynenv::EnvInit::stationary(), c_.envs, derive_seed(seed, kEnvStream)});
            auto r = rec(d, n, p, mu, eps, "tail_fraction", rep.fraction.value, "exact");
            r.ci_lo = rep.fraction.ci.lo;
            r.ci_hi = rep.fraction.ci.hi;
            r.x = 0;
            out.records.push_back(r);
            out.records.push_back(rec(d, n, p, mu, eps, "tail_threshold", threshold, "C*n^2*log(1/eps)/mu"));
            out.records.push_back(rec(d, n, p, mu, eps, "tmix_start0_median", stats::median(rep.mixing_times), "exact"));
            // The bound P(t_mix >= threshold) <= eps, judged against the lower confidence limit.
            out.pass = rep.fraction.ci.lo <= eps;
          }});
        });
  }

  void lower_bound() {
    torus_grid([&](std::uint64_t seed, unsigned d, unsigned n, double p, double mu) {
      cells.push_back({cell_id(d, n, p, mu, seed), seed, [=, this](CellOutcome& out, const Deadline&) {
        const double eps = c_.eps.front();
        for (double beta : c_.beta) {
          const auto iso = scenarios::isolation_frequency(d, n, p, mu, beta, c_.envs, derive_seed(seed, kEnvStream));
          auto r = rec(d, n, p, mu, eps, "isolated_fraction@beta=" + num(beta), iso.fraction.value, "exact");
          r.ci_lo = iso.fraction.ci.lo;
          r.ci_hi = iso.fraction.ci.hi;
          out.records.push_back(r);
        }
        const double states = std::pow(static_cast<double>(n), d);
        if (states <= static_cast<double>(walk::kDefaultStateBudget)) {
          const auto scan = scenarios::tv_beta_scan(d, n, p, mu, c_.beta, eps, c_.concentration, c_.envs,
                                                    derive_seed(seed, kEnvStream));
          for (const auto& row : scan.rows) {
            out.records.push_back(rec(d, n, p, mu, eps, "mean_tv@beta=" + num(row.beta), row.mean_tv, "exact"));
            out.records.push_back(
                rec(d, n, p, mu, eps, "near_one_fraction@beta=" + num(row.beta), row.near_one_fraction, "exact"));
          }
          out.records.push_back(rec(d, n, p, mu, eps, "beta0", scan.beta0, "grid"));
        }
      }});
    });
  }

  void evoset() {
    for (auto seed : c_.seeds) {
      const auto s = std::to_string(seed);
      cells.push_back({"lemmas_s" + s, seed, [=, this](CellOutcome& out, const Deadline& deadline) {
        const auto r = scenarios::evoset_lemma_suite(c_.instances, 6, seed, deadline);
        auto add = [&](const std::string& stat, double v) {
          auto x = rec(0, 6, 0.0, 0.0, 0.0, stat, v, "exact");
          out.records.push_back(x);
        };
        add("chains", static_cast<double>(r.chains));
        add("max_martingale_defect", r.max_martingale_defect);
        add("max_doob_defect", r.max_doob_defect);
        add("max_duality_defect", r.max_duality_defect);
        add("psi_phi_violations", static_cast<double>(r.psi_phi_violations));
        add("min_psi_phi_slack", r.min_psi_phi_slack);
        out.pass = r.max_martingale_defect <= 1e-12 && r.max_doob_defect <= 1e-12 && r.max_duality_defect <= 1e-12 &&
                   r.psi_phi_violations == 0;
        if (r.censored) out.status = "censored";
      }});
      cells.push_back({"marginal_s" + s, seed, [=, this](CellOutcome& out, const Deadline& deadline) {
        const auto r = scenarios::marginal_identity_suite(std::max<std::size_t>(1, c_.instances / 10), 5, 6, seed,
                                                          deadline);
        out.records.push_back(rec(0, 5, 0.0, 0.0, 0.0, "chains", static_cast<double>(r.chains), "exact"));
        out.records.push_back(rec(0, 5, 0.0, 0.0, 0.0, "max_marginal_error", r.max_error, "exact"));
        out.records.push_back(rec(0, 5, 0.0, 0.0, 0.0, "pruned_mass", r.pruned_mass, "exact"));
        out.pass = r.max_error <= 1e-9;
        if (r.censored) out.status = "censored";
      }});
      for (double eps : c_.eps) {
        cells.push_back({"zbound_eps" + num(eps) + "_s" + s, seed, [=, this](CellOutcome& out, const Deadline& deadline) {
          const auto r = scenarios::z_bound_suite(std::max<std::size_t>(1, c_.instances / 20), eps, seed, deadline);
          auto add = [&](const std::string& stat, double v) {
            out.records.push_back(rec(0, 5, 0.0, 0.0, eps, stat, v, "exact"));
          };
          add("instances", static_cast<double>(r.instances));
          add("chi_violations", static_cast<double>(r.chi_violations));
          add("contraction_violations", static_cast<double>(r.contraction_violations));
          add("lemma_failures", static_cast<double>(r.lemma_failures));
          add("lemma_unchecked", static_cast<double>(r.lemma_unchecked));
          add("max_z_over_sqrt_eps", r.max_z_over_sqrt_eps);
          out.pass = r.chi_violations == 0 && r.contraction_violations == 0 && r.lemma_failures == 0 &&
                     r.lemma_unchecked == 0;
          if (r.censored) out.status = "censored";
        }});
      }
    }
  }

  void expansion() {
    torus_grid([&](std::uint64_t seed, unsigned d, unsigned n, double p, double mu) {
      const auto id = cell_id(d, n, p, mu, seed);
      cells.push_back({id, seed, [=, this](CellOutcome& out, const Deadline& deadline) {
        const auto r = scenarios::expansion_lower_bound_suite(d, n, p, mu, c_.envs, derive_seed(seed, kEnvStream),
                                                              deadline);
        auto add = [&](const std::string& stat, double v, const std::string& method) {
          out.records.push_back(rec(d, n, p, mu, 0.0, stat, v, method));
        };
        add("iso_constant", r.iso_constant, "exhaustive");
        add("witness_c", r.witness, "gamma*iso/(2d)");
        add("environments", static_cast<double>(r.environments), "count");
        add("violations", static_cast<double>(r.violations), "exact");
        add("min_ratio", r.min_ratio, "exact");
        add("mean_beta", r.mean_beta, "exact");
        out.pass = r.violations == 0;
        if (r.censored) out.status = "censored";

        // Exact profile of the first environment's unit-window kernel, for small tori.
        const torus::TorusGraph g(d, n);
        if (g.vertex_count() <= 16) {
          const auto env = dynenv::sample_env(g, {p, mu, 1.0}, dynenv::EnvInit::stationary(),
                                              derive_seed(derive_seed(seed, kEnvStream), 0));
          const auto k = walk::window_kernel(env, 0.0, 1.0).matrix;
          const auto prof = expansion::profile_phi_exact({k}, dist::uniform(g.vertex_count()));
          const auto rel = fs::path("profiles") / (id + ".txt");
          fs::create_directories(out_ / "profiles");
          std::ofstream file(out_ / rel);
          expansion::write_profile(file, prof.profile());
          if (!file) throw std::runtime_error("cannot write " + rel.string());
          out.artifacts.push_back(rel.generic_string());
        }
      }});
    });
  }

  void bound() {
    if (c_.scenario == "theorem") {
      for (auto seed : c_.seeds) {
        cells.push_back({"theorem_s" + std::to_string(seed), seed, [=, this](CellOutcome& out, const Deadline& deadline) {
          const auto cases = scenarios::theorem_suite(c_.instances, c_.eps, c_.mode, seed, deadline);
          bool all = true;
          for (const auto& tc : cases) {
            const auto& rep = tc.report;
            const std::string kind = tc.variant ? "variant" : "plain";
            auto add = [&](const std::string& stat, double v, const std::string& method) {
              auto r = rec(0, static_cast<unsigned>(tc.states), 0.0, 0.0, rep.eps, stat, v, method);
              r.env_seed = tc.instance;
              out.records.push_back(r);
              return &out.records.back();
            };
            add("gamma", rep.gamma, kind);
            add("n_phi", static_cast<double>(rep.n_phi), kind);
            add("n_psi", static_cast<double>(rep.n_psi), kind);
            for (const auto& t : rep.tails) {
              auto* r = add("tail_zeta" + std::to_string(t.zeta0), t.tail, t.method);
              r->ci_lo = t.ci.lo;
              r->ci_hi = t.ci.hi;
            }
            add("threshold", rep.threshold, kind);
            all = all && rep.pass && rep.psi_not_weaker;
          }
          out.pass = all;
          if (cases.size() < c_.instances * c_.eps.size()) out.status = "censored";
        }});
      }
      return;
    }
    if (c_.scenario == "torus") {
      for (unsigned d : c_.d)
        for (unsigned n : c_.n)
          for (double mu : c_.mu)
            for (double sigma : c_.sigma)
              for (double eps : c_.eps) {
                const auto id = "d" + std::to_string(d) + "_n" + std::to_string(n) + "_mu" + num(mu) + "_sigma" +
                                num(sigma) + "_eps" + num(eps);
                cells.push_back({id, c_.seeds.front(), [=](CellOutcome& out, const Deadline&) {
                  const torus::TorusGraph g(d, n);
                  const double c = expansion::torus_phi_witness(d, scenarios::iso_constant(g), 0.5);
                  const double scale = c * sigma * sigma * mu * mu;
                  const auto prof = expansion::torus_analytic_profile(d, n, scale);
                  const double pi_x = 1.0 / static_cast<double>(g.vertex_count());
                  const double closed = expansion::torus_analytic_integral(d, n, scale, eps);
                  const double stepped = expansion::mixing_integral(prof, pi_x, eps);
                  const double shape = std::pow(static_cast<double>(n) / (mu * mu), 2) * std::log(1.0 / eps);
                  // Above u = 1/2 the integrand is 1 / (u phi(1/2)^2), so halving eps adds log 2 / phi(1/2)^2.
                  const double slope = static_cast<double>(n) * n * std::pow(0.5, 2.0 / d) / (scale * scale);
                  const double step_gap = expansion::torus_analytic_integral(d, n, scale, eps / 2.0) - closed;
                  const double rel_gap = std::abs(step_gap - slope * std::log(2.0)) / (slope * std::log(2.0));
                  auto add = [&](const std::string& stat, double v, const std::string& method) {
                    out.records.push_back(rec(d, n, 0.0, mu, eps, stat, v, method));
                  };
                  add("scale", scale, "c*sigma^2*mu^2");
                  add("integral_closed_form", closed, "analytic");
                  add("integral_step_profile", stepped, "step-profile");
                  add("closed_over_shape", closed / shape, "analytic");
                  add("slope_identity_rel_error", rel_gap, "analytic");
                  add("mixing_bound_steps",
                      static_cast<double>(expansion::integral_mixing_bound(prof, 0.5, pi_x, eps)), "step-profile");
                  out.pass = std::isfinite(closed) && stepped >= closed * (1.0 - 1e-12) && rel_gap <= 1e-9;
                }});
              }
      return;
    }
    // profile
    for (double eps : c_.eps) {
      cells.push_back({"profile_eps" + num(eps), c_.seeds.front(), [=, this](CellOutcome& out, const Deadline&) {
        std::ifstream in(c_.profile);
        if (!in) throw InputError("cannot open profile '" + c_.profile + "'");
        auto prof = expansion::read_profile(in);
        if (prof.provenance() == expansion::Provenance::FamilyRestricted) {
          throw DomainError("a family-restricted profile is only an upper envelope and cannot certify a bound");
        }
        const auto certified = prof.provenance() == expansion::Provenance::ExactEnumerated
                                   ? expansion::CertifiedProfile::from_exact(std::move(prof))
                                   : expansion::CertifiedProfile::from_analytic(std::move(prof));
        const double pi_x = certified.profile().lower_end();
        out.records.push_back(
            rec(0, 0, 0.0, 0.0, eps, "integral", expansion::mixing_integral(certified, pi_x, eps), "profile-file"));
        out.records.push_back(rec(0, 0, 0.0, 0.0, eps, "mixing_bound_steps",
                                  static_cast<double>(expansion::integral_mixing_bound(certified, 0.5, pi_x, eps)),
                                  "profile-file"));
      }});
    }
  }

  void lab() {
    if (c_.scenario == "counterexample") {
      for (auto seed : c_.seeds) {
        cells.push_back({"counterexample_s" + std::to_string(seed), seed, [=, this](CellOutcome& out, const Deadline&) {
          const auto r = scenarios::counterexample_report(c_.paths, 20, seed);
          auto add = [&](const std::string& stat, double v) {
            out.records.push_back(rec(0, 2, 0.0, 0.0, 0.0, stat, v, "exact"));
          };
          add("annealed_tv_x1", r.annealed_tv_x1);
          add("quenched_paths", static_cast<double>(r.paths));
          add("quenched_tv_exactly_half", static_cast<double>(r.quenched_exact_half));
          add("quenched_tv_min", r.min_quenched_tv);
          add("quenched_tv_max", r.max_quenched_tv);
          add("gamma", r.gamma);
          add("theorem_applicable", r.theorem_applicable ? 1.0 : 0.0);
          out.pass = r.annealed_tv_x1 == 0.0 && r.quenched_exact_half == r.paths && !r.theorem_applicable;
        }});
      }
      return;
    }
    // convexity: annealed TV <= E[quenched TV] at every step
    for (auto seed : c_.seeds) {
      cells.push_back({"convexity_s" + std::to_string(seed), seed, [=, this](CellOutcome& out, const Deadline& deadline) {
        double worst = -std::numeric_limits<double>::infinity();
        std::size_t violations = 0, checked = 0;
        for (std::size_t i = 0; i < c_.instances; ++i) {
          if (deadline.expired()) {
            out.status = "censored";
            break;
          }
          Rng rng(derive_seed(seed, i));
          const auto base = envlab::random_chain(2 + rng.below(2), 2 + rng.below(3), 0.3 * rng.uniform(), i % 2, rng);
          const auto ch = i % 3 == 2 ? envlab::variant_chain(base) : base;
          for (std::size_t k = 1; k <= 6; ++k) {
            const double annealed = dist::tv(envlab::annealed_law(ch, 0, 0, k), ch.pi);
            const double quenched = envlab::expected_quenched_tv(ch, 0, 0, k);
            worst = std::max(worst, annealed - quenched);
            if (annealed > quenched + 1e-12) ++violations;
            ++checked;
          }
        }
        out.records.push_back(rec(0, 0, 0.0, 0.0, 0.0, "checks", static_cast<double>(checked), "exact"));
        out.records.push_back(rec(0, 0, 0.0, 0.0, 0.0, "max_annealed_minus_quenched", worst, "exact"));
        out.records.push_back(rec(0, 0, 0.0, 0.0, 0.0, "violations", static_cast<double>(violations), "exact"));
        out.pass = violations == 0;
      }});
    }
  }
};

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "sha256:" + sha256_hex(data);
}

double summary_of(const CellOutcome& cell, const std::string& statistic) {
  for (const auto& r : cell.records) {
    if (r.statistic == statistic) return r.value;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

RunResult run(const ExperimentConfig& config, std::ostream& log) {
  const auto errors = validate(config);
  if (!errors.empty()) throw ConfigError(errors);

  RunResult result;
  result.config_hash = config.hash();
  const fs::path out = config.out;
  fs::create_directories(out);

  Planner planner(config, out);
  planner.plan();
  auto& cells = planner.cells;
  result.cells.resize(cells.size());

  parallel_for(cells.size(), [&](std::size_t i) {
    auto& outcome = result.cells[i];
    outcome.id = cells[i].id;
    outcome.seed = cells[i].seed;
    const auto start = std::chrono::steady_clock::now();
    try {
      const Deadline deadline(config.budget);
      cells[i].body(outcome, deadline);
    } catch (const std::exception& e) {
      outcome.status = "failed";
      outcome.pass = false;
      outcome.message = e.what();
    }
    outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  // Fits over groups of cells.
  std::vector<dist::Record> fit_records;
  const bool mixing = config.scenario == "subcritical-mixing";
  for (const auto& g : planner.groups) {
    std::vector<scenarios::ScalingCell> sc;
    bool complete = true;
    for (auto idx : g.cells) {
      const auto& cell = result.cells[idx];
      complete = complete && cell.status == "ok";
      scenarios::ScalingCell s;
      const auto& first = cell.records.empty() ? dist::Record{} : cell.records.back();
      s.d = first.d;
      s.n = first.n;
      s.mu = first.mu;
      s.summary = summary_of(cell, mixing ? "tmix_median" : "hit_max_annealed");
      sc.push_back(s);
    }
    const auto fit = scenarios::fit_scaling(sc);
    const auto& head = sc.front();
    auto add = [&](const std::string& stat, double v) {
      auto r = rec(head.d, 0, config.p.front(), 0.0, mixing ? config.eps.front() : 0.0, stat, v, "least-squares");
      r.config_hash = result.config_hash;
      r.cell_id = "fit_" + g.id;
      r.seed = result.cells[g.cells.front()].seed;
      fit_records.push_back(r);
    };
    add("fit_n_exponent", fit.n_exponent);
    add("fit_inv_mu_exponent", fit.inv_mu_exponent);
    add("fit_residual_rms", fit.residual_rms);
    add("fit_constant_max", fit.max_constant);
    add("fit_constant_min", fit.min_constant);
    const bool fitted = complete && std::isfinite(fit.n_exponent);
    result.checks.push_back({"n_exponent_" + g.id, fit.n_exponent, 1.6, 2.4,
                             fitted && fit.n_exponent >= 1.6 && fit.n_exponent <= 2.4});
    result.checks.push_back({"inv_mu_exponent_" + g.id, fit.inv_mu_exponent, 0.6, 1.4,
                             fitted && fit.inv_mu_exponent >= 0.6 && fit.inv_mu_exponent <= 1.4});
  }

  // Deterministic merge in planning order.
  const auto csv_rel = output_name(config) + ".csv";
  {
    std::ofstream csv(out / csv_rel, std::ios::binary);
    dist::write_csv_header(csv);
    for (auto& cell : result.cells) {
      for (auto& r : cell.records) {
        r.config_hash = result.config_hash;
        r.cell_id = cell.id;
        r.seed = cell.seed;
        dist::write_csv_row(csv, r);
      }
    }
    for (const auto& r : fit_records) dist::write_csv_row(csv, r);
    if (!csv) throw std::runtime_error("cannot write " + (out / csv_rel).string());
  }
  result.files.emplace_back(csv_rel, file_digest(out / csv_rel));
  for (const auto& cell : result.cells) {
    for (const auto& a : cell.artifacts) result.files.emplace_back(a, file_digest(out / a));
  }

  bool ok = true;
  std::size_t failed = 0, censored = 0;
  for (const auto& cell : result.cells) {
    ok = ok && cell.status == "ok" && cell.pass;
    failed += cell.status == "failed";
    censored += cell.status == "censored";
  }
  for (const auto& c : result.checks) ok = ok && c.pass;
  result.exit_code = ok ? 0 : 1;

  std::ofstream manifest(out / "manifest.jsonl", std::ios::binary);
  Json head;
  head["type"] = "run";
  head["config_hash"] = result.config_hash;
  head["code_version"] = DYNAPERC_VERSION;
  head["results_schema"] = dist::kResultsSchemaVersion;
  head["subcommand"] = config.subcommand;
  head["scenario"] = config.scenario;
  head["config"] = config.canonical();
  head["workers"] = worker_count();
  manifest << head.dump() << '\n';
  for (const auto& cell : result.cells) {
    Json j;
    j["type"] = "cell";
    j["cell_id"] = cell.id;
    j["seed"] = cell.seed;
    j["status"] = cell.status;
    j["pass"] = cell.pass;
    j["wall_clock_s"] = cell.seconds;
    j["records"] = cell.records.size();
    if (!cell.message.empty()) j["message"] = cell.message;
    manifest << j.dump() << '\n';
    log << cell.id << ": " << cell.status << (cell.pass ? "" : " (assertion failed)")
        << (cell.message.empty() ? "" : " - " + cell.message) << " [" << num(std::round(cell.seconds * 100) / 100)
        << " s]\n";
  }
  for (const auto& c : result.checks) {
    Json j;
    j["type"] = "check";
    j["name"] = c.name;
    j["value"] = std::isfinite(c.value) ? Json(c.value) : Json(num(c.value));
    j["lo"] = c.lo;
    j["hi"] = c.hi;
    j["pass"] = c.pass;
    manifest << j.dump() << '\n';
    log << "check " << c.name << " = " << num(c.value) << " in [" << num(c.lo) << ", " << num(c.hi) << "]: "
        << (c.pass ? "pass" : "FAIL") << '\n';
  }
  for (const auto& [path, digest] : result.files) {
    Json j;
    j["type"] = "file";
    j["path"] = path;
    j["digest"] = digest;
    manifest << j.dump() << '\n';
  }
  Json tail;
  tail["type"] = "summary";
  tail["cells"] = result.cells.size();
  tail["failed"] = failed;
  tail["censored"] = censored;
  tail["exit_status"] = result.exit_code;
  manifest << tail.dump() << '\n';
  log << result.cells.size() << " cells, " << failed << " failed, " << censored << " censored; results in "
      << (out / csv_rel).string() << '\n';
  return result;
}

}  // namespace dynaperc::cli
