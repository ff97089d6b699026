#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "dynaperc/chain.hpp"
#include "dynaperc/expansion.hpp"

namespace dynaperc::evoset {

using chain::Kernel;
using chain::Measure;
using chain::Subset;

/// Time-inhomogeneous chain: kernel(k) moves X_{k-1} to X_k, k >= 1.
/// A periodic chain repeats its kernel list indefinitely.
class InhomChain {
 public:
  InhomChain(Measure pi, std::vector<Kernel> kernels, bool periodic = false);

  const Measure& pi() const { return pi_; }
  std::size_t states() const { return static_cast<std::size_t>(pi_.size()); }
  std::size_t length() const { return kernels_.size(); }
  bool periodic() const { return periodic_; }
  const std::vector<Kernel>& kernels() const { return kernels_; }
  const Kernel& kernel(std::size_t step) const;

  /// delta_x K_1 ... K_k.
  Measure law(std::size_t x, std::size_t k) const;

 private:
  Measure pi_;
  std::vector<Kernel> kernels_;
  bool periodic_;
};

/// S# = S if pi(S) <= 1/2, else S^c.
Subset sharp(Subset s, const Measure& pi);

struct EvoSetState {
  Subset set = 0;
  double mass = 0.0;
  double z = 0.0;  // sqrt(pi(S#)) / pi(S); NaN for the empty set
};

EvoSetState make_state(Subset s, const Measure& pi);
double z_value(Subset s, const Measure& pi);

/// Distribution over subsets.
struct SetLaw {
  std::vector<std::pair<Subset, double>> entries;

  double total() const;
  double probability(Subset s) const;
  double expectation(const auto& f) const {
    double acc = 0.0;
    for (const auto& [s, p] : entries) acc += p * f(s);
    return acc;
  }
};

/// {y : Q(S, y) / pi(y) >= u}. The empty set and the full space are absorbing.
Subset evolve_step(Subset s, const Kernel& k, const Measure& pi, double u);

/// Exact one-step law: the threshold map u -> S~ is piecewise constant
/// between the sorted distinct values of Q(S, y) / pi(y).
SetLaw step_law(Subset s, const Kernel& k, const Measure& pi);

/// Doob transform: P^(S, S') = pi(S') / pi(S) * P(S, S'). Requires S nonempty.
SetLaw doob_step_law(Subset s, const Kernel& k, const Measure& pi);

/// psi(S) = 1 - E sqrt(pi(S~) / pi(S)).
double expected_sqrt_ratio(Subset s, const Kernel& k, const Measure& pi);

/// |sum_S' P(S, S') pi(S') - pi(S)|.
double martingale_defect(Subset s, const Kernel& k, const Measure& pi);

/// |sum_S' P^(S, S') - 1|.
double doob_normalization_defect(Subset s, const Kernel& k, const Measure& pi);

/// Largest |P(S^c -> T^c) - P(S -> T)| over T.
double complement_duality_defect(Subset s, const Kernel& k, const Measure& pi);

/// Slack psi(S) - gamma^2 / (2 (1 - gamma)^2) phi(S)^2 with gamma = min(min diag, 1/2).
double psi_phi_slack(Subset s, const Kernel& k, const Measure& pi);

struct Trajectory {
  std::vector<EvoSetState> states;
  std::vector<double> weights;  // Doob runs: pi(S_0) / pi(S_k), so E[f(S_k)] = E^[weight * f(S_k)]
  bool absorbed = false;        // ordinary runs only: reached the empty set
};

/// Ordinary run driven by i.i.d. uniforms from `seed`.
Trajectory run_evoset(const InhomChain& chain, Subset s0, std::size_t steps, std::uint64_t seed);

/// Run of the Doob-transformed process, sampling each step from doob_step_law.
Trajectory doob_run(const InhomChain& chain, Subset s0, std::size_t steps, std::uint64_t seed);

struct Propagation {
  std::vector<SetLaw> laws;  // laws[j] = law of S_j, j = 0..k
  double pruned_mass = 0.0;
};

inline constexpr std::size_t kPropagationLimit = 14;

/// Exact subset-law propagation; entries below `prune` are dropped and
/// their mass accumulated in pruned_mass.
Propagation propagate(const InhomChain& chain, Subset s0, std::size_t steps, bool doob, double prune = 1e-15);

struct MarginalReport {
  double max_error = 0.0;
  double pruned_mass = 0.0;
};

/// max_y |P_x(X_k = y) - pi(y) / pi(x) P(y in S_k | S_0 = {x})|.
MarginalReport marginal_identity_check(const InhomChain& chain, std::size_t x, std::size_t k);

/// psi-profile r -> inf { sum_j w_ij psi_{K_j}(S) : rows i, pi(S) <= r }.
expansion::CertifiedProfile psi_profile(const std::vector<Kernel>& kernels,
                                        const std::vector<std::vector<double>>& weights, const Measure& pi);

/// Profile over the chain's kernels (each environment state is one kernel).
expansion::CertifiedProfile psi_profile(const InhomChain& chain);

/// ceil(int_{4 pi_x}^{4/eps} du / (u psi(u))).
std::uint64_t psi_step_count(const expansion::CertifiedProfile& psi, double pi_x, double eps);

struct ZBoundReport {
  std::vector<double> expected_z;  // Doob expectation of Z_j, j = 0..k
  std::vector<double> chi;         // chi(law of X_j, pi)
  std::size_t chi_violations = 0;  // chi > E^[Z] + 1e-9
  std::size_t contraction_violations = 0;  // E^[Z_{j+1} | S_j] > Z_j (1 - f0(Z_j)) + 1e-12
  std::uint64_t lemma_steps = 0;   // psi-integral step count
  bool lemma_checked = false;      // k >= lemma_steps
  double z_at_lemma = 0.0;
  bool lemma_pass = true;          // E^[Z] <= sqrt(eps) at lemma_steps
  double pruned_mass = 0.0;
};

ZBoundReport doob_z_bound_check(const InhomChain& chain, std::size_t x, std::size_t k, double eps);

}  // namespace dynaperc::evoset
