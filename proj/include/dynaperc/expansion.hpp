#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dynaperc/chain.hpp"
#include "dynaperc/dynenv.hpp"
#include "dynaperc/stats.hpp"
#include "dynaperc/torus.hpp"

namespace dynaperc::expansion {

using chain::Kernel;
using chain::Measure;
using chain::Subset;

/// Q(A, B) = sum_{x in A, y in B} pi(x) K(x, y).
double q_flow(const Kernel& k, const Measure& pi, Subset a, Subset b);
double q_flow(const Kernel& k, const Measure& pi, const torus::VertexSet& a, const torus::VertexSet& b);

/// phi(S) = Q(S, S^c) / pi(S). InputError when S is empty.
double expansion_phi(const Kernel& k, const Measure& pi, Subset s);
double expansion_phi(const Kernel& k, const Measure& pi, const torus::VertexSet& s);

/// Same quantity computed as P(X_1 not in S | X_0 in S) from the stationary
/// two-step joint law; kept as an independent route for cross-checks.
double escape_probability(const Kernel& k, const Measure& pi, Subset s);

enum class Provenance { ExactEnumerated, FamilyRestricted, AnalyticTorusBound };
std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& text);

/// Nonincreasing step function r -> value. Knot i covers [r_i, r_{i+1});
/// the last knot sits at r = 1/2 and extends to +infinity.
class ExpansionProfile {
 public:
  struct Knot {
    double r;
    double value;
  };

  ExpansionProfile(std::vector<Knot> knots, Provenance provenance);

  const std::vector<Knot>& knots() const { return knots_; }
  Provenance provenance() const { return provenance_; }
  double lower_end() const { return knots_.front().r; }
  double operator()(double r) const;

  /// Closed form of int_lo^hi du / (u * value(u)^power), summed per step.
  double log_integral(double lo, double hi, int power) const;

 private:
  std::vector<Knot> knots_;
  Provenance provenance_;
};

/// Profiles usable in mixing bounds (exact infima or proved lower bounds).
class CertifiedProfile {
 public:
  const ExpansionProfile& profile() const { return profile_; }
  static CertifiedProfile from_exact(ExpansionProfile p);
  static CertifiedProfile from_analytic(ExpansionProfile p);

 private:
  explicit CertifiedProfile(ExpansionProfile p) : profile_(std::move(p)) {}
  ExpansionProfile profile_;
};

/// Upper envelopes from a restricted candidate family; diagnostics only.
class DiagnosticProfile {
 public:
  explicit DiagnosticProfile(ExpansionProfile p);
  const ExpansionProfile& profile() const { return profile_; }

 private:
  ExpansionProfile profile_;
};

inline constexpr std::size_t kExactProfileLimit = 24;

/// Set function evaluated for the profile. Called with nonempty S, pi(S) <= 1/2.
using SetFunctional = double (*)(const Kernel&, const Measure&, Subset);

/// Exact profile r -> inf { phi_K(S) : K in kernels, pi(S) <= r }. For an
/// environment chain pass the R-averaged kernels, since phi is linear in K.
CertifiedProfile profile_phi_exact(const std::vector<Kernel>& kernels, const Measure& pi);

/// Builds a step profile from (mass, value) samples: running minimum over
/// mass, knots at the distinct masses <= 1/2.
ExpansionProfile profile_from_samples(std::vector<std::pair<double, double>> samples, Provenance provenance);

/// Family-restricted profile over explicit candidate sets.
DiagnosticProfile profile_phi_family(const std::vector<Kernel>& kernels, const Measure& pi,
                                     const std::vector<Subset>& family);

/// Standard family: singletons, index intervals, and `random_sets` random subsets.
std::vector<Subset> default_family(const Measure& pi, std::size_t random_sets, std::uint64_t seed);

/// Step lower bound of r -> scale / (n r^(1/d)) on the dyadic grid
/// r_i = 2^i / n^d, taking each step's right-end value.
CertifiedProfile torus_analytic_profile(unsigned d, unsigned n, double scale);

/// Closed form of int_{4/n^d}^{4/eps} du / (u phi^2(u)) for
/// phi(r) = scale / (n min(r, 1/2)^(1/d)).
double torus_analytic_integral(unsigned d, unsigned n, double scale, double eps);

/// Smallest integer n >= 1 + (2(1-gamma)^2 / gamma^2) * int_{4 pi_x}^{4/eps} du / (u phi^2(u)).
std::uint64_t integral_mixing_bound(const CertifiedProfile& profile, double gamma, double pi_x, double eps);

/// The raw integral int_{4 pi_x}^{4/eps} du / (u phi^2(u)).
double mixing_integral(const CertifiedProfile& profile, double pi_x, double eps);

/// Environment-averaged expansion by Monte Carlo over the window [0, window]
/// from a fixed initial configuration.
stats::Estimate phi_env_torus(const torus::TorusGraph& g, const dynenv::DynParams& params,
                              const dynenv::EnvInit& init, const torus::VertexSet& s, double window,
                              std::size_t samples, std::uint64_t seed);

/// Exact environment-averaged expansion: phi_{sum_j w_j K_j}(S).
double phi_env_exact(const std::vector<double>& weights, const std::vector<Kernel>& kernels, const Measure& pi,
                     Subset s);

/// gamma(d) for a half-window of length h: min(h e^-h / (2d), e^-h).
double torus_gamma(unsigned d, double half_window);

/// c = gamma(d) c'_d / (2d) with c'_d the exhaustive isoperimetric constant.
double torus_phi_witness(unsigned d, double iso_constant, double half_window);

struct TorusBoundRecord {
  double beta = 0.0;       // fraction of boundary edges open on the second half of the window
  double phi = 0.0;        // expansion of S in the window kernel
  stats::Interval phi_ci;  // degenerate in exact mode
  std::string method = "exact";
  double bound = 0.0;      // c beta / (n pi(S)^(1/d))
  double ratio = 0.0;      // phi / (beta / (n pi(S)^(1/d))); +inf when beta = 0
  bool pass = false;
};

/// Checks phi(S) >= c beta / (n pi(S)^(1/d)) on the window [a, b]. Above
/// the exact state budget phi is estimated from `mc_replicas` walks and the
/// check uses the upper confidence limit.
TorusBoundRecord torus_phi_lower_bound_check(const dynenv::EnvTrajectory& env, const torus::VertexSet& s,
                                             double a, double b, double witness,
                                             std::size_t mc_replicas = 10000, std::uint64_t walk_seed = 1);

/// Text form: "dynaperc-profile 1", "provenance <tag>", then "knot <r> <value>" lines.
void write_profile(std::ostream& out, const ExpansionProfile& p);
ExpansionProfile read_profile(std::istream& in);

}  // namespace dynaperc::expansion
