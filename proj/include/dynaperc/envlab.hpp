#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dynaperc/chain.hpp"
#include "dynaperc/dist.hpp"
#include "dynaperc/evoset.hpp"
#include "dynaperc/expansion.hpp"
#include "dynaperc/stats.hpp"
#include "dynaperc/walk.hpp"

namespace dynaperc::envlab {

using chain::Kernel;
using chain::Measure;

/// Walk in a Markovian environment: environment states 0..E-1 with
/// transition matrix R, a kernel p_zeta per environment state, and a common
/// stationary pi. One step: zeta' ~ R(zeta, .), then x' ~ p_zeta'(x, .).
///
/// With lazy_coupled set, each step first flips a fair coin: on heads the
/// walker and the environment both stay put, on tails both move as above.
/// Quenched quantities condition on the environment path only, so the coin
/// is averaged out given that path.
struct FiniteEnvChain {
  Eigen::MatrixXd R;
  std::vector<Kernel> kernels;
  Measure pi;
  bool lazy_coupled = false;

  FiniteEnvChain(Eigen::MatrixXd r, std::vector<Kernel> k, Measure p, bool coupled = false);

  std::size_t environments() const { return kernels.size(); }
  std::size_t states() const { return static_cast<std::size_t>(pi.size()); }

  /// Law of the environment path: R, or (I + R) / 2 when lazy-coupled.
  Eigen::MatrixXd env_transition() const;
  /// Walker kernel for one step given the environment moved zeta -> next.
  Kernel step_kernel(std::size_t zeta, std::size_t next) const;
  /// Kernels entering the expansion and psi profiles: p_zeta, or (p_zeta + I) / 2.
  std::vector<Kernel> effective_kernels() const;
  /// min over zeta, x of the effective kernels' diagonal.
  double gamma() const;
};

/// Product chain on (zeta, x), index zeta * m + x.
struct AnnealedChain {
  std::size_t environments = 0;
  std::size_t states = 0;
  Eigen::MatrixXd Q;

  std::size_t index(std::size_t zeta, std::size_t x) const { return zeta * states + x; }
  double max_row_sum_error() const;
};

AnnealedChain annealed_kernel(const FiniteEnvChain& chain);

/// Marginal law of X_k under the annealed chain from (zeta0, x0).
dist::Dist annealed_law(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t x0, std::size_t k);

struct QuenchedLaw {
  dist::Dist law;
  bool off_support = false;  // some step has zero probability under the environment law
};

/// delta_x0 times the step kernels along zeta0 -> path[0] -> path[1] -> ...
QuenchedLaw quenched_law(const FiniteEnvChain& chain, std::size_t zeta0, const std::vector<std::size_t>& path,
                         std::size_t x0);

inline constexpr std::uint64_t kPathEnumerationLimit = 1'000'000;

/// Calls visit(path, probability) for every environment path of length k
/// from zeta0 with positive probability. Throws CapabilityError above
/// kPathEnumerationLimit paths.
void for_each_path(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t k,
                   const std::function<void(const std::vector<std::size_t>&, double)>& visit);

/// Annealed law as the path-weighted sum of quenched laws.
dist::Dist annealed_law_by_paths(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t x0, std::size_t k);

/// E over paths of TV(quenched law, pi).
double expected_quenched_tv(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t x0, std::size_t k);

/// Identity and swap on two states, chosen i.i.d. with probability 1/2.
FiniteEnvChain counterexample_chain();

/// The lazy-coupled version of a plain chain.
FiniteEnvChain variant_chain(const FiniteEnvChain& chain);

/// Random instance: E environment states, m walk states, random R with
/// positive entries, pi-stationary kernels with diagonal >= min_diagonal.
FiniteEnvChain random_chain(std::size_t environments, std::size_t states, double min_diagonal, bool uniform_pi,
                            Rng& rng);

/// Certified profiles of the environment-averaged functionals
/// phi(zeta, S) = phi of sum_eta R(zeta, eta) p_eta and
/// psi(zeta, S) = sum_eta R(zeta, eta) psi_{p_eta}(S), over the effective kernels.
expansion::CertifiedProfile env_phi_profile(const FiniteEnvChain& chain);
expansion::CertifiedProfile env_psi_profile(const FiniteEnvChain& chain);

struct TailResult {
  std::size_t zeta0 = 0;
  double tail = 0.0;              // P(chi >= eps^(1/4)) (exact, bound, or estimate)
  stats::Interval ci;             // equals [tail, tail] for exact results
  std::string method;             // exact | exact-bound | mc
  std::uint64_t nodes = 0;
  bool pass = false;
};

struct TheoremReport {
  double gamma = 0.0;  // clamped to 1/2
  double eps = 0.0;
  double threshold = 0.0;
  std::uint64_t n_phi = 0;
  std::uint64_t n_psi = 0;
  bool psi_not_weaker = false;  // n_phi >= n_psi
  std::vector<TailResult> tails;
  bool pass = false;
};

struct TheoremOptions {
  dist::Mode mode = dist::Mode::Exact;
  std::uint64_t node_budget = 1'000'000;
  std::size_t mc_paths = 10'000;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> steps;  // override n (for diagnostics)
};

/// Checks P_zeta(chi(quenched law at n, pi) >= eps^(1/4)) <= eps^(1/4) for
/// every start zeta, with n from the integral mixing bound. Exact mode walks
/// the tree of environment paths, dropping prefixes whose chi has already
/// fallen below the threshold (chi never increases along a path). When the
/// node budget runs out, the bad mass of the last complete level is a valid
/// upper bound; if that bound is inconclusive, Monte Carlo takes over.
TheoremReport theorem_2_1_check(const FiniteEnvChain& chain, std::size_t x, double eps,
                                const TheoremOptions& options = {});

/// Fixed-environment walk chain from consecutive torus window kernels (uniform pi).
evoset::InhomChain inhom_from_blocks(const walk::BlockChain& blocks, bool periodic = false);

/// Versioned plain-text chain spec.
void write_chain(std::ostream& out, const FiniteEnvChain& chain);
FiniteEnvChain read_chain(std::istream& in);

}  // namespace dynaperc::envlab
