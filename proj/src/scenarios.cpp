#include "dynaperc/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynaperc/dynenv.hpp"
#include "dynaperc/error.hpp"
#include "dynaperc/evoset.hpp"
#include "dynaperc/expansion.hpp"
#include "dynaperc/rng.hpp"
#include "dynaperc/walk.hpp"

namespace dynaperc::scenarios {

Deadline::Deadline(double seconds) {
  if (seconds > 0.0) {
    end_ = std::chrono::steady_clock::now() +
           std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(seconds));
  }
}

bool Deadline::expired() const { return end_ && std::chrono::steady_clock::now() >= *end_; }

std::vector<EdgeLawCell> edge_law_suite(const std::vector<double>& ps, const std::vector<double>& mus,
                                        const std::vector<double>& times, std::size_t edges, std::size_t envs,
                                        std::uint64_t seed, const Deadline& deadline) {
  const torus::TorusGraph g(1, static_cast<unsigned>(edges));
  const double horizon = *std::max_element(times.begin(), times.end());
  std::vector<EdgeLawCell> out;
  std::uint64_t block = 0;
  for (double p : ps) {
    for (double mu : mus) {
      std::vector<std::size_t> open(times.size(), 0);
      std::size_t samples = 0;
      for (std::size_t i = 0; i < envs && !deadline.expired(); ++i) {
        const auto env = dynenv::sample_env(g, {p, mu, horizon}, dynenv::EnvInit::all_closed(),
                                            derive_seed(seed, block * envs + i));
        for (std::size_t j = 0; j < times.size(); ++j) {
          for (torus::EdgeId e = 0; e < g.edge_count(); ++e) open[j] += env.state_at(e, times[j]) ? 1 : 0;
        }
        samples += g.edge_count();
      }
      ++block;
      for (std::size_t j = 0; j < times.size(); ++j) {
        EdgeLawCell c;
        c.p = p;
        c.mu = mu;
        c.t = times[j];
        c.samples = samples;
        c.expected = p * (1.0 - std::exp(-mu * times[j]));
        c.empirical = samples ? static_cast<double>(open[j]) / static_cast<double>(samples) : 0.0;
        c.sigma = samples ? std::sqrt(c.expected * (1.0 - c.expected) / static_cast<double>(samples)) : 0.0;
        c.within = samples > 0 && std::abs(c.empirical - c.expected) <= 3.0 * c.sigma;
        out.push_back(c);
      }
    }
  }
  return out;
}

KernelInvariantReport kernel_invariant_suite(unsigned d, unsigned n, std::size_t envs, double horizon,
                                             std::uint64_t seed, const Deadline& deadline) {
  const torus::TorusGraph g(d, n);
  KernelInvariantReport r;
  auto absorb = [&](const walk::WalkKernel& k) {
    r.max_row_error = std::max(r.max_row_error, k.max_row_sum_error());
    r.max_column_error = std::max(r.max_column_error, k.max_column_sum_error());
    ++r.kernels;
  };
  for (std::size_t i = 0; i < envs; ++i) {
    if (deadline.expired()) {
      r.censored = true;
      break;
    }
    Rng rng(derive_seed(seed, i));
    const double p = 0.05 + 0.9 * rng.uniform();
    const double mu = 0.02 + 0.48 * rng.uniform();
    const dynenv::EnvInit inits[] = {dynenv::EnvInit::stationary(), dynenv::EnvInit::all_closed(),
                                     dynenv::EnvInit::all_open()};
    const auto env = dynenv::sample_env(g, {p, mu, horizon}, inits[i % 3], derive_seed(seed ^ kEnvStream, i));
    for (const auto& k : walk::block_chain(env, 1.0).kernels) {
      absorb(k);
      r.min_unit_diagonal = std::min(r.min_unit_diagonal, k.min_diagonal());
    }
    const double a = horizon * rng.uniform();
    const double b = a + (horizon - a) * rng.uniform();
    absorb(walk::window_kernel(env, a, b));
    ++r.environments;
  }
  return r;
}

LemmaSuiteReport evoset_lemma_suite(std::size_t chains, std::size_t max_states, std::uint64_t seed,
                                    const Deadline& deadline) {
  if (max_states < 2) throw InputError("lemma suite needs at least 2 states");
  LemmaSuiteReport r;
  r.min_psi_phi_slack = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < chains; ++c) {
    if (deadline.expired()) {
      r.censored = true;
      break;
    }
    Rng rng(derive_seed(seed, c));
    const std::size_t m = 2 + rng.below(max_states - 1);
    const chain::Measure pi = c % 2 ? dist::uniform(m) : chain::random_full_support(m, rng);
    const auto k = chain::random_stationary_kernel(pi, 0.5 * rng.uniform(), rng);
    for (chain::Subset s = 1; s < chain::full_set(m); ++s) {
      r.max_martingale_defect = std::max(r.max_martingale_defect, evoset::martingale_defect(s, k, pi));
      r.max_doob_defect = std::max(r.max_doob_defect, evoset::doob_normalization_defect(s, k, pi));
      r.max_duality_defect = std::max(r.max_duality_defect, evoset::complement_duality_defect(s, k, pi));
      const double slack = evoset::psi_phi_slack(s, k, pi);
      r.min_psi_phi_slack = std::min(r.min_psi_phi_slack, slack);
      if (slack < -1e-12) ++r.psi_phi_violations;
      ++r.sets;
    }
    ++r.chains;
  }
  return r;
}

MarginalSuiteReport marginal_identity_suite(std::size_t chains, std::size_t states, std::size_t steps,
                                            std::uint64_t seed, const Deadline& deadline) {
  MarginalSuiteReport r;
  for (std::size_t c = 0; c < chains; ++c) {
    if (deadline.expired()) {
      r.censored = true;
      break;
    }
    Rng rng(derive_seed(seed, c));
    const chain::Measure pi = chain::random_full_support(states, rng);
    std::vector<chain::Kernel> ks;
    for (std::size_t j = 0; j < steps; ++j) ks.push_back(chain::random_stationary_kernel(pi, 0.3 * rng.uniform(), rng));
    const evoset::InhomChain ch(pi, std::move(ks));
    for (std::size_t x = 0; x < states; ++x) {
      const auto rep = evoset::marginal_identity_check(ch, x, steps);
      r.max_error = std::max(r.max_error, rep.max_error);
      r.pruned_mass = std::max(r.pruned_mass, rep.pruned_mass);
    }
    ++r.chains;
  }
  return r;
}

ZSuiteReport z_bound_suite(std::size_t instances, double eps, std::uint64_t seed, const Deadline& deadline) {
  ZSuiteReport r;
  for (std::size_t i = 0; i < instances; ++i) {
    if (deadline.expired()) {
      r.censored = true;
      break;
    }
    Rng rng(derive_seed(seed, i));
    const std::size_t m = 3 + rng.below(3);
    const std::size_t len = 1 + rng.below(3);
    const chain::Measure pi = i % 2 ? dist::uniform(m) : chain::random_full_support(m, rng);
    std::vector<chain::Kernel> ks;
    for (std::size_t j = 0; j < len; ++j) ks.push_back(chain::random_stationary_kernel(pi, 0.5, rng));
    const evoset::InhomChain ch(pi, std::move(ks), true);
    const std::size_t x = rng.below(m);
    const auto steps = evoset::psi_step_count(evoset::psi_profile(ch), pi(static_cast<Eigen::Index>(x)), eps);
    const auto rep = evoset::doob_z_bound_check(ch, x, steps, eps);
    r.chi_violations += rep.chi_violations;
    r.contraction_violations += rep.contraction_violations;
    if (!rep.lemma_checked) ++r.lemma_unchecked;
    if (!rep.lemma_pass) ++r.lemma_failures;
    if (rep.lemma_checked) r.max_z_over_sqrt_eps = std::max(r.max_z_over_sqrt_eps, rep.z_at_lemma / std::sqrt(eps));
    r.max_steps = std::max<std::uint64_t>(r.max_steps, steps);
    ++r.instances;
  }
  return r;
}

std::vector<TheoremCase> theorem_suite(std::size_t instances, const std::vector<double>& eps, dist::Mode mode,
                                       std::uint64_t seed, const Deadline& deadline) {
  std::vector<TheoremCase> out;
  for (std::size_t i = 0; i < instances && !deadline.expired(); ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t environments = 1 + rng.below(3);
    const std::size_t states = 2 + rng.below(3);
    const double min_diag = 0.1 + 0.4 * rng.uniform();
    const auto base = envlab::random_chain(environments, states, min_diag, i % 4 < 2, rng);
    const bool variant = i % 2 == 1;
    const auto ch = variant ? envlab::variant_chain(base) : base;
    for (double e : eps) {
      envlab::TheoremOptions opt;
      opt.mode = mode;
      opt.seed = derive_seed(seed ^ kWalkStream, i);
      out.push_back({i, variant, environments, states, envlab::theorem_2_1_check(ch, 0, e, opt)});
    }
  }
  return out;
}

CounterexampleReport counterexample_report(std::size_t paths, std::size_t max_length, std::uint64_t seed) {
  const auto ch = envlab::counterexample_chain();
  const auto pi = dist::uniform(ch.states());
  CounterexampleReport r;
  for (std::size_t z = 0; z < ch.environments(); ++z) {
    for (std::size_t x = 0; x < ch.states(); ++x) {
      r.annealed_tv_x1 = std::max(r.annealed_tv_x1, dist::tv(envlab::annealed_law(ch, z, x, 1), pi));
    }
  }
  Rng rng(seed);
  r.min_quenched_tv = std::numeric_limits<double>::infinity();
  r.max_quenched_tv = 0.0;
  for (std::size_t i = 0; i < paths; ++i) {
    const std::size_t len = 1 + rng.below(max_length);
    std::vector<std::size_t> path(len);
    for (auto& z : path) z = rng.below(ch.environments());
    const auto q = envlab::quenched_law(ch, rng.below(ch.environments()), path, rng.below(ch.states()));
    const double v = dist::tv(q.law, pi);
    r.min_quenched_tv = std::min(r.min_quenched_tv, v);
    r.max_quenched_tv = std::max(r.max_quenched_tv, v);
    if (v == 0.5) ++r.quenched_exact_half;
    ++r.paths;
  }
  r.gamma = ch.gamma();
  try {
    envlab::theorem_2_1_check(ch, 0, 0.1);
  } catch (const DomainError&) {
    r.theorem_applicable = false;
  }
  return r;
}

namespace {

double n_squared_over_mu(unsigned n, double mu) { return static_cast<double>(n) * n / mu; }

}  // namespace

ScalingCell mixing_cell(unsigned d, unsigned n, double p, double mu, double eps, std::size_t envs,
                        std::uint64_t seed, const MixingOptions& options, const Deadline& deadline) {
  if (!(mu > 0.0)) throw InputError("mixing sweeps need mu > 0");
  const torus::TorusGraph g(d, n);
  const double scale = n_squared_over_mu(n, mu);
  const double horizon = options.horizon_factor * scale;
  const dist::Grid grid{scale / options.resolution, horizon};
  const bool exact = options.mode == dist::Mode::Exact;
  ScalingCell c{d, n, p, mu, eps, {}, {}, 0.0, -1, 0.0, exact ? "exact-worst-start" : "mc-start-0", false};
  for (std::size_t i = 0; i < envs; ++i) {
    if (deadline.expired()) {
      c.censored = true;
      break;
    }
    const std::uint64_t env_seed = derive_seed(seed ^ kEnvStream, i);
    const auto env = dynenv::sample_env(g, {p, mu, horizon}, dynenv::EnvInit::stationary(), env_seed);
    const double t = exact ? dist::quenched_mixing_time_worst(env, eps, grid)
                           : dist::quenched_mixing_time(env, 0, eps, grid, dist::Mode::MonteCarlo,
                                                        {options.replicas, derive_seed(seed ^ kWalkStream, i)});
    c.values.push_back(t);
    c.env_seeds.push_back(env_seed);
  }
  if (!c.values.empty()) {
    c.summary = stats::median(c.values);
    const auto unmixed = std::count_if(c.values.begin(), c.values.end(), [](double t) { return !dist::mixed(t); });
    c.censored_fraction = static_cast<double>(unmixed) / static_cast<double>(c.values.size());
  }
  return c;
}

torus::VertexSet random_half_target(const torus::TorusGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  const auto offset = static_cast<unsigned>(rng.below(g.side()));
  const auto box = torus::half_box(g);
  torus::VertexSet out(g.vertex_count());
  for (auto v : box.members()) {
    for (unsigned k = 0; k < offset; ++k) v = g.shift(v, 0, +1);
    out.insert(v);
  }
  return out;
}

ScalingCell hitting_cell(unsigned d, unsigned n, double p, double mu, std::size_t envs, std::uint64_t seed,
                         double horizon_factor, const Deadline& deadline) {
  if (!(mu > 0.0)) throw InputError("hitting sweeps need mu > 0");
  const torus::TorusGraph g(d, n);
  const double horizon = horizon_factor * n_squared_over_mu(n, mu);
  const auto target = random_half_target(g, derive_seed(seed, 0x74617267ULL));
  ScalingCell c{d, n, p, mu, 0.0, {}, {}, 0.0, -1, 0.0, "exact-truncated", false};
  std::vector<double> sum(g.vertex_count(), 0.0);
  for (std::size_t i = 0; i < envs; ++i) {
    if (deadline.expired()) {
      c.censored = true;
      break;
    }
    const std::uint64_t env_seed = derive_seed(seed ^ kEnvStream, i);
    const auto env = dynenv::sample_env(g, {p, mu, horizon}, dynenv::EnvInit::stationary(), env_seed);
    const auto h = dist::quenched_hitting_exact(env, target);
    for (std::size_t x = 0; x < sum.size(); ++x) sum[x] += h.truncated_mean[x];
    c.values.push_back(*std::max_element(h.truncated_mean.begin(), h.truncated_mean.end()));
    c.env_seeds.push_back(env_seed);
    c.censored_fraction = std::max(c.censored_fraction, *std::max_element(h.survival.begin(), h.survival.end()));
  }
  if (!c.values.empty()) {
    const auto it = std::max_element(sum.begin(), sum.end());
    c.summary = *it / static_cast<double>(c.values.size());
    c.argmax = it - sum.begin();
  }
  return c;
}

ScalingFit fit_scaling(const std::vector<ScalingCell>& cells) {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  ScalingFit f;
  f.min_constant = std::numeric_limits<double>::infinity();
  for (const auto& c : cells) {
    x.push_back({static_cast<double>(c.n), 1.0 / c.mu});
    y.push_back(c.summary);
    const double k = c.summary / n_squared_over_mu(c.n, c.mu);
    f.max_constant = std::max(f.max_constant, k);
    f.min_constant = std::min(f.min_constant, k);
  }
  const bool usable = std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v) && v > 0.0; });
  if (!usable || cells.size() < 3) {
    f.n_exponent = f.inv_mu_exponent = f.residual_rms = std::numeric_limits<double>::quiet_NaN();
    return f;
  }
  const auto fit = stats::fit_power_law(x, y);
  f.n_exponent = fit.exponents[0];
  f.inv_mu_exponent = fit.exponents[1];
  f.residual_rms = fit.residual_rms;
  return f;
}

IsolationReport isolation_frequency(unsigned d, unsigned n, double p, double mu, double beta, std::size_t envs,
                                    std::uint64_t seed) {
  const torus::TorusGraph g(d, n);
  dist::LowerBoundOptions opt;
  opt.compute_tv = false;
  const auto rep = dist::quenched_lower_bound_experiment(g, {p, mu, 1.0}, beta, 0.25,
                                                         {dynenv::EnvInit::stationary(), envs, seed}, opt);
  return {envs, rep.isolated, rep.isolated_fraction};
}

BetaScan tv_beta_scan(unsigned d, unsigned n, double p, double mu, const std::vector<double>& betas, double eps,
                      double concentration, std::size_t envs, std::uint64_t seed) {
  const torus::TorusGraph g(d, n);
  auto sorted = betas;
  std::sort(sorted.begin(), sorted.end());
  BetaScan scan;
  bool prefix = true;
  for (double beta : sorted) {
    dist::LowerBoundOptions opt;
    opt.compute_isolation = false;
    const auto rep = dist::quenched_lower_bound_experiment(g, {p, mu, 1.0}, beta, eps,
                                                           {dynenv::EnvInit::stationary(), envs, seed}, opt);
    scan.rows.push_back({beta, rep.time, rep.mean_tv.value, rep.near_one, envs, rep.near_one_fraction.value});
    // beta0 is the end of the initial run of concentrated grid points.
    prefix = prefix && rep.near_one_fraction.value >= concentration;
    if (prefix) scan.beta0 = beta;
  }
  return scan;
}

double iso_constant(const torus::TorusGraph& g) {
  try {
    return torus::iso_profile(g).value;
  } catch (const CapabilityError&) {
    if (g.dim() == 1) return 2.0;  // an arc always has exactly two boundary edges
    throw;
  }
}

ExpansionCheckReport expansion_lower_bound_suite(unsigned d, unsigned n, double p, double mu, std::size_t envs,
                                                 std::uint64_t seed, const Deadline& deadline) {
  const torus::TorusGraph g(d, n);
  const auto s = torus::half_box(g);
  ExpansionCheckReport r;
  r.d = d;
  r.n = n;
  r.iso_constant = iso_constant(g);
  r.witness = expansion::torus_phi_witness(d, r.iso_constant, 0.5);
  r.min_ratio = std::numeric_limits<double>::infinity();
  double beta_sum = 0.0;
  for (std::size_t i = 0; i < envs; ++i) {
    if (deadline.expired()) {
      r.censored = true;
      break;
    }
    const auto env = dynenv::sample_env(g, {p, mu, 1.0}, dynenv::EnvInit::stationary(), derive_seed(seed, i));
    const auto rec = expansion::torus_phi_lower_bound_check(env, s, 0.0, 1.0, r.witness, 10000,
                                                            derive_seed(seed ^ kWalkStream, i));
    if (!rec.pass) ++r.violations;
    if (rec.beta > 0.0) r.min_ratio = std::min(r.min_ratio, rec.ratio);
    beta_sum += rec.beta;
    ++r.environments;
  }
  if (r.environments) r.mean_beta = beta_sum / static_cast<double>(r.environments);
  return r;
}

}  // namespace dynaperc::scenarios
