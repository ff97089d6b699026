#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynaperc/dist.hpp"
#include "dynaperc/envlab.hpp"
#include "dynaperc/stats.hpp"
#include "dynaperc/torus.hpp"

// Experiment building blocks shared by the command-line runner and the
// acceptance harness. Each returns plain numbers; callers decide how to report.
namespace dynaperc::scenarios {

/// Cooperative wall-clock cap. Loops poll expired() between work units and
/// report the run as censored instead of finishing.
class Deadline {
 public:
  Deadline() = default;
  explicit Deadline(double seconds);
  bool expired() const;

 private:
  std::optional<std::chrono::steady_clock::time_point> end_;
};

// ---- environment and kernels ----

struct EdgeLawCell {
  double p = 0.0, mu = 0.0, t = 0.0;
  std::size_t samples = 0;
  double empirical = 0.0;
  double expected = 0.0;  // p (1 - e^{-mu t})
  double sigma = 0.0;     // binomial standard deviation of the empirical fraction
  bool within = false;    // |empirical - expected| <= 3 sigma
};

/// P(open at t | closed at 0) from all-closed environments on a d = 1 torus
/// with `edges` edges; samples = edges * envs.
std::vector<EdgeLawCell> edge_law_suite(const std::vector<double>& ps, const std::vector<double>& mus,
                                        const std::vector<double>& times, std::size_t edges, std::size_t envs,
                                        std::uint64_t seed, const Deadline& deadline = {});

struct KernelInvariantReport {
  std::size_t environments = 0;
  std::size_t kernels = 0;
  double max_row_error = 0.0;
  double max_column_error = 0.0;
  double min_unit_diagonal = 1.0;  // over windows of length exactly 1
  bool censored = false;
};

/// Unit windows [k-1, k] plus one random window per environment, for random
/// (p, mu) and stationary or extreme starts.
KernelInvariantReport kernel_invariant_suite(unsigned d, unsigned n, std::size_t envs, double horizon,
                                             std::uint64_t seed, const Deadline& deadline = {});

// ---- evolving sets ----

struct LemmaSuiteReport {
  std::size_t chains = 0;
  std::size_t sets = 0;
  double max_martingale_defect = 0.0;
  double max_doob_defect = 0.0;
  double max_duality_defect = 0.0;
  std::size_t psi_phi_violations = 0;  // slack < -1e-12
  double min_psi_phi_slack = 0.0;
  bool censored = false;
};

/// Every nonempty proper subset of `chains` random chains with 2..max_states states.
LemmaSuiteReport evoset_lemma_suite(std::size_t chains, std::size_t max_states, std::uint64_t seed,
                                    const Deadline& deadline = {});

struct MarginalSuiteReport {
  std::size_t chains = 0;
  double max_error = 0.0;
  double pruned_mass = 0.0;
  bool censored = false;
};

/// Random inhomogeneous chains with a common random pi; every start state.
MarginalSuiteReport marginal_identity_suite(std::size_t chains, std::size_t states, std::size_t steps,
                                            std::uint64_t seed, const Deadline& deadline = {});

struct ZSuiteReport {
  std::size_t instances = 0;
  std::size_t chi_violations = 0;
  std::size_t contraction_violations = 0;
  std::size_t lemma_failures = 0;   // E^[Z] > sqrt(eps) at the psi step count
  std::size_t lemma_unchecked = 0;  // step count could not be reached
  double max_z_over_sqrt_eps = 0.0;
  std::uint64_t max_steps = 0;
  bool censored = false;
};

/// Periodic lazy chains (diagonal >= 1/2) on 3..5 states with 1..3 kernels.
ZSuiteReport z_bound_suite(std::size_t instances, double eps, std::uint64_t seed, const Deadline& deadline = {});

// ---- environment chains ----

struct TheoremCase {
  std::size_t instance = 0;
  bool variant = false;
  std::size_t environments = 0;
  std::size_t states = 0;
  envlab::TheoremReport report;
};

/// `instances` random chains; odd instances use the lazy-coupled variant.
std::vector<TheoremCase> theorem_suite(std::size_t instances, const std::vector<double>& eps, dist::Mode mode,
                                       std::uint64_t seed, const Deadline& deadline = {});

struct CounterexampleReport {
  double annealed_tv_x1 = 0.0;
  std::size_t paths = 0;
  std::size_t quenched_exact_half = 0;  // paths with quenched TV exactly 1/2
  double min_quenched_tv = 0.0;
  double max_quenched_tv = 0.0;
  double gamma = 0.0;
  bool theorem_applicable = true;  // false when the check reports zero laziness
};

CounterexampleReport counterexample_report(std::size_t paths, std::size_t max_length, std::uint64_t seed);

// ---- torus scaling ----

struct ScalingCell {
  unsigned d = 1, n = 0;
  double p = 0.0, mu = 0.0, eps = 0.0;
  std::vector<double> values;  // per environment; kNotMixed when censored
  std::vector<std::uint64_t> env_seeds;
  double summary = 0.0;        // median for mixing, max_x mean for hitting
  long long argmax = -1;
  double censored_fraction = 0.0;
  std::string method;
  bool censored = false;       // wall-clock budget hit
};

struct MixingOptions {
  double horizon_factor = 3.0;   // horizon = factor * n^2 / mu
  double resolution = 200.0;     // grid step = n^2 / (mu * resolution)
  dist::Mode mode = dist::Mode::Exact;
  std::size_t replicas = 10000;  // Monte Carlo only
};

/// Median over environments of t_mix(eps, eta) (worst start) in exact mode,
/// or of t_mix(eps, 0, eta) in Monte Carlo mode.
ScalingCell mixing_cell(unsigned d, unsigned n, double p, double mu, double eps, std::size_t envs,
                        std::uint64_t seed, const MixingOptions& options = {}, const Deadline& deadline = {});

/// Random target of size floor(n/2) n^(d-1): the half box rotated along axis 0.
torus::VertexSet random_half_target(const torus::TorusGraph& g, std::uint64_t seed);

/// max_x of the environment-averaged E[min(tau_A, T)], T = factor * n^2 / mu.
ScalingCell hitting_cell(unsigned d, unsigned n, double p, double mu, std::size_t envs, std::uint64_t seed,
                         double horizon_factor = 4.0, const Deadline& deadline = {});

struct ScalingFit {
  double n_exponent = 0.0;
  double inv_mu_exponent = 0.0;
  double residual_rms = 0.0;
  double max_constant = 0.0;  // max over cells of summary * mu / n^2
  double min_constant = 0.0;
};

/// log(summary) = a + b log n + c log(1/mu) over the cells.
ScalingFit fit_scaling(const std::vector<ScalingCell>& cells);

// ---- lower bounds and expansion ----

struct IsolationReport {
  std::size_t environments = 0;
  std::size_t isolated = 0;
  stats::Estimate fraction;
};

IsolationReport isolation_frequency(unsigned d, unsigned n, double p, double mu, double beta, std::size_t envs,
                                    std::uint64_t seed);

struct BetaScanRow {
  double beta = 0.0;
  double time = 0.0;
  double mean_tv = 0.0;
  std::size_t near_one = 0;
  std::size_t environments = 0;
  double near_one_fraction = 0.0;
};

struct BetaScan {
  std::vector<BetaScanRow> rows;
  double beta0 = 0.0;  // largest grid beta with near-one fraction >= `concentration`; 0 if none
};

BetaScan tv_beta_scan(unsigned d, unsigned n, double p, double mu, const std::vector<double>& betas, double eps,
                      double concentration, std::size_t envs, std::uint64_t seed);

struct ExpansionCheckReport {
  unsigned d = 0, n = 0;
  double witness = 0.0;
  double iso_constant = 0.0;
  std::size_t environments = 0;
  std::size_t violations = 0;
  double min_ratio = 0.0;  // min phi / (beta / (n pi(S)^(1/d))) over environments with beta > 0
  double mean_beta = 0.0;
  bool censored = false;
};

/// phi(S) >= c beta / (n pi(S)^(1/d)) on the window [0, 1] for S the half box.
ExpansionCheckReport expansion_lower_bound_suite(unsigned d, unsigned n, double p, double mu, std::size_t envs,
                                                 std::uint64_t seed, const Deadline& deadline = {});

/// Exhaustive isoperimetric constant; the cycle value 2 beyond the enumeration limit in d = 1.
double iso_constant(const torus::TorusGraph& g);

}  // namespace dynaperc::scenarios
