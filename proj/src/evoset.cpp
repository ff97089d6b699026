#include "dynaperc/evoset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynaperc/dist.hpp"
#include "dynaperc/error.hpp"
#include "dynaperc/rng.hpp"

namespace dynaperc::evoset {

namespace {

// Threshold values closer than this are treated as one level of the U-map.
constexpr double kTieTolerance = 1e-13;

void check_states(const Measure& pi) {
  if (static_cast<std::size_t>(pi.size()) > chain::kMaxMaskStates) {
    throw CapabilityError("evolving sets use bit-mask subsets; at most 63 states");
  }
}

// Q(S, y) / pi(y) for every y, clamped to [0, 1].
std::vector<double> thresholds(Subset s, const Kernel& k, const Measure& pi) {
  const auto m = static_cast<std::size_t>(pi.size());
  std::vector<double> t(m, 0.0);
  for (auto x : chain::members(s)) {
    const auto xi = static_cast<Eigen::Index>(x);
    for (std::size_t y = 0; y < m; ++y) t[y] += pi(xi) * k(xi, static_cast<Eigen::Index>(y));
  }
  for (std::size_t y = 0; y < m; ++y) t[y] = std::clamp(t[y] / pi(static_cast<Eigen::Index>(y)), 0.0, 1.0);
  return t;
}

SetLaw from_map(const std::map<Subset, double>& m) {
  SetLaw law;
  law.entries.assign(m.begin(), m.end());
  return law;
}

}  // namespace

InhomChain::InhomChain(Measure pi, std::vector<Kernel> kernels, bool periodic)
    : pi_(std::move(pi)), kernels_(std::move(kernels)), periodic_(periodic) {
  chain::check_full_support(pi_);
  check_states(pi_);
  for (const auto& k : kernels_) chain::check_kernel(k, pi_);
  if (periodic_ && kernels_.empty()) throw InputError("periodic chain needs at least one kernel");
}

const Kernel& InhomChain::kernel(std::size_t step) const {
  if (step == 0) throw InputError("kernel steps are numbered from 1");
  if (periodic_) return kernels_[(step - 1) % kernels_.size()];
  if (step > kernels_.size()) throw InputError("step beyond the kernel sequence");
  return kernels_[step - 1];
}

Measure InhomChain::law(std::size_t x, std::size_t k) const {
  if (x >= states()) throw InputError("state out of range");
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(pi_.size());
  row(static_cast<Eigen::Index>(x)) = 1.0;
  for (std::size_t j = 1; j <= k; ++j) row = row * kernel(j);
  return row.transpose();
}

Subset sharp(Subset s, const Measure& pi) {
  return chain::mass(pi, s) <= 0.5 ? s : chain::complement(s, static_cast<std::size_t>(pi.size()));
}

double z_value(Subset s, const Measure& pi) {
  if (s == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(chain::mass(pi, sharp(s, pi))) / chain::mass(pi, s);
}

EvoSetState make_state(Subset s, const Measure& pi) { return {s, chain::mass(pi, s), z_value(s, pi)}; }

double SetLaw::total() const {
  double t = 0.0;
  for (const auto& e : entries) t += e.second;
  return t;
}

double SetLaw::probability(Subset s) const {
  for (const auto& [set, p] : entries) {
    if (set == s) return p;
  }
  return 0.0;
}

Subset evolve_step(Subset s, const Kernel& k, const Measure& pi, double u) {
  check_states(pi);
  const auto m = static_cast<std::size_t>(pi.size());
  if (s == 0) return 0;
  if (s == chain::full_set(m)) return s;
  const auto t = thresholds(s, k, pi);
  Subset out = 0;
  for (std::size_t y = 0; y < m; ++y) {
    if (t[y] >= u) out |= Subset{1} << y;
  }
  return out;
}

SetLaw step_law(Subset s, const Kernel& k, const Measure& pi) {
  check_states(pi);
  const auto m = static_cast<std::size_t>(pi.size());
  if (s == 0 || s == chain::full_set(m)) return SetLaw{{{s, 1.0}}};
  const auto t = thresholds(s, k, pi);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t[a] > t[b]; });

  // Levels: groups of states sharing a threshold value (within tolerance).
  std::vector<std::pair<double, Subset>> levels;
  for (auto y : order) {
    const double v = t[y] >= 1.0 - kTieTolerance ? 1.0 : t[y];
    if (!levels.empty() && levels.back().first - v <= kTieTolerance) {
      levels.back().second |= Subset{1} << y;
    } else {
      levels.emplace_back(v, Subset{1} << y);
    }
  }
  SetLaw law;
  const double top = levels.front().first;
  if (1.0 - top > 0.0) law.entries.emplace_back(0, 1.0 - top);
  Subset cumulative = 0;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    cumulative |= levels[j].second;
    const double below = j + 1 < levels.size() ? levels[j + 1].first : 0.0;
    const double p = levels[j].first - below;
    if (p > 0.0) law.entries.emplace_back(cumulative, p);
  }
  std::sort(law.entries.begin(), law.entries.end());
  return law;
}

SetLaw doob_step_law(Subset s, const Kernel& k, const Measure& pi) {
  if (s == 0) throw InputError("the Doob transform is not defined from the empty set");
  const double base = chain::mass(pi, s);
  SetLaw out;
  for (const auto& [next, p] : step_law(s, k, pi).entries) {
    if (next == 0) continue;
    out.entries.emplace_back(next, chain::mass(pi, next) / base * p);
  }
  return out;
}

double expected_sqrt_ratio(Subset s, const Kernel& k, const Measure& pi) {
  if (s == 0) throw InputError("psi is not defined for the empty set");
  const double base = chain::mass(pi, s);
  const auto law = step_law(s, k, pi);
  return 1.0 - law.expectation([&](Subset next) { return std::sqrt(chain::mass(pi, next) / base); });
}

double martingale_defect(Subset s, const Kernel& k, const Measure& pi) {
  const auto law = step_law(s, k, pi);
  return std::abs(law.expectation([&](Subset next) { return chain::mass(pi, next); }) - chain::mass(pi, s));
}

double doob_normalization_defect(Subset s, const Kernel& k, const Measure& pi) {
  return std::abs(doob_step_law(s, k, pi).total() - 1.0);
}

double complement_duality_defect(Subset s, const Kernel& k, const Measure& pi) {
  const auto m = static_cast<std::size_t>(pi.size());
  std::map<Subset, double> direct;
  for (const auto& [t, p] : step_law(chain::complement(s, m), k, pi).entries) direct[t] += p;
  std::map<Subset, double> mirrored;
  for (const auto& [t, p] : step_law(s, k, pi).entries) mirrored[chain::complement(t, m)] += p;
  double worst = 0.0;
  for (const auto& [t, p] : direct) worst = std::max(worst, std::abs(p - (mirrored.count(t) ? mirrored[t] : 0.0)));
  for (const auto& [t, p] : mirrored) {
    if (!direct.count(t)) worst = std::max(worst, p);
  }
  return worst;
}

double psi_phi_slack(Subset s, const Kernel& k, const Measure& pi) {
  const double gamma = std::min(chain::min_diagonal(k), 0.5);
  const double psi = expected_sqrt_ratio(s, k, pi);
  if (gamma <= 0.0) return psi;
  const double phi = expansion::expansion_phi(k, pi, s);
  return psi - gamma * gamma / (2.0 * (1.0 - gamma) * (1.0 - gamma)) * phi * phi;
}

Trajectory run_evoset(const InhomChain& chain, Subset s0, std::size_t steps, std::uint64_t seed) {
  Rng rng(seed);
  Trajectory tr;
  Subset s = s0;
  tr.states.push_back(make_state(s, chain.pi()));
  for (std::size_t j = 1; j <= steps; ++j) {
    const double u = rng.uniform();
    s = evolve_step(s, chain.kernel(j), chain.pi(), u);
    tr.states.push_back(make_state(s, chain.pi()));
  }
  tr.absorbed = s == 0;
  return tr;
}

Trajectory doob_run(const InhomChain& chain, Subset s0, std::size_t steps, std::uint64_t seed) {
  if (s0 == 0) throw InputError("Doob runs start from a nonempty set");
  Rng rng(seed);
  Trajectory tr;
  Subset s = s0;
  const double base = chain::mass(chain.pi(), s0);
  tr.states.push_back(make_state(s, chain.pi()));
  tr.weights.push_back(1.0);
  for (std::size_t j = 1; j <= steps; ++j) {
    const auto law = doob_step_law(s, chain.kernel(j), chain.pi());
    const double u = rng.uniform() * law.total();
    double acc = 0.0;
    Subset pick = law.entries.back().first;
    for (const auto& [next, p] : law.entries) {
      acc += p;
      if (u < acc) {
        pick = next;
        break;
      }
    }
    s = pick;
    tr.states.push_back(make_state(s, chain.pi()));
    tr.weights.push_back(base / chain::mass(chain.pi(), s));
  }
  return tr;
}

Propagation propagate(const InhomChain& chain, Subset s0, std::size_t steps, bool doob, double prune) {
  if (chain.states() > kPropagationLimit) {
    throw CapabilityError("exact set-law propagation supports at most 14 states");
  }
  Propagation out;
  out.laws.push_back(SetLaw{{{s0, 1.0}}});
  for (std::size_t j = 1; j <= steps; ++j) {
    std::map<Subset, double> next;
    const auto& k = chain.kernel(j);
    for (const auto& [s, p] : out.laws.back().entries) {
      const auto law = doob ? doob_step_law(s, k, chain.pi()) : step_law(s, k, chain.pi());
      for (const auto& [t, q] : law.entries) next[t] += p * q;
    }
    for (auto it = next.begin(); it != next.end();) {
      if (it->second < prune) {
        out.pruned_mass += it->second;
        it = next.erase(it);
      } else {
        ++it;
      }
    }
    out.laws.push_back(from_map(next));
  }
  return out;
}

MarginalReport marginal_identity_check(const InhomChain& chain, std::size_t x, std::size_t k) {
  if (x >= chain.states()) throw InputError("state out of range");
  const auto prop = propagate(chain, Subset{1} << x, k, false);
  const auto law = chain.law(x, k);
  const auto& pi = chain.pi();
  MarginalReport r;
  r.pruned_mass = prop.pruned_mass;
  for (std::size_t y = 0; y < chain.states(); ++y) {
    const double inside = prop.laws.back().expectation([&](Subset s) { return chain::contains(s, y) ? 1.0 : 0.0; });
    const auto yi = static_cast<Eigen::Index>(y);
    const double via_sets = pi(yi) / pi(static_cast<Eigen::Index>(x)) * inside;
    r.max_error = std::max(r.max_error, std::abs(law(yi) - via_sets));
  }
  return r;
}

expansion::CertifiedProfile psi_profile(const std::vector<Kernel>& kernels,
                                        const std::vector<std::vector<double>>& weights, const Measure& pi) {
  const auto m = static_cast<std::size_t>(pi.size());
  if (m > 20) throw CapabilityError("psi profile enumeration supports at most 20 states");
  for (const auto& row : weights) {
    if (row.size() != kernels.size()) throw InputError("psi profile weight row has the wrong length");
  }
  std::vector<std::pair<double, double>> samples;
  std::vector<double> psi(kernels.size());
  const Subset full = chain::full_set(m);
  for (Subset s = 1; s < full; ++s) {
    const double mass = chain::mass(pi, s);
    if (mass > 0.5 + 1e-12) continue;
    for (std::size_t j = 0; j < kernels.size(); ++j) psi[j] = expected_sqrt_ratio(s, kernels[j], pi);
    for (const auto& row : weights) {
      double v = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) v += row[j] * psi[j];
      samples.emplace_back(mass, std::max(0.0, v));
    }
  }
  return expansion::CertifiedProfile::from_exact(
      expansion::profile_from_samples(std::move(samples), expansion::Provenance::ExactEnumerated));
}

expansion::CertifiedProfile psi_profile(const InhomChain& chain) {
  std::vector<std::vector<double>> weights(chain.length(), std::vector<double>(chain.length(), 0.0));
  for (std::size_t i = 0; i < chain.length(); ++i) weights[i][i] = 1.0;
  return psi_profile(chain.kernels(), weights, chain.pi());
}

std::uint64_t psi_step_count(const expansion::CertifiedProfile& psi, double pi_x, double eps) {
  if (!(eps > 0.0)) throw InputError("eps must be positive");
  return static_cast<std::uint64_t>(std::ceil(psi.profile().log_integral(4.0 * pi_x, 4.0 / eps, 1)));
}

ZBoundReport doob_z_bound_check(const InhomChain& chain, std::size_t x, std::size_t k, double eps) {
  if (x >= chain.states()) throw InputError("state out of range");
  const auto& pi = chain.pi();
  const auto profile = psi_profile(chain);
  ZBoundReport r;
  r.lemma_steps = psi_step_count(profile, pi(static_cast<Eigen::Index>(x)), eps);
  const auto prop = propagate(chain, Subset{1} << x, k, true);
  r.pruned_mass = prop.pruned_mass;
  const Subset full = chain::full_set(chain.states());
  for (std::size_t j = 0; j <= k; ++j) {
    const auto& law = prop.laws[j];
    const double ez = law.expectation([&](Subset s) { return z_value(s, pi); });
    r.expected_z.push_back(ez);
    r.chi.push_back(dist::chi(chain.law(x, j), pi));
    if (r.chi.back() > ez + 1e-9) ++r.chi_violations;
    if (j == k) break;
    for (const auto& [s, p] : law.entries) {
      if (s == full) continue;
      const double z = z_value(s, pi);
      const auto next = doob_step_law(s, chain.kernel(j + 1), pi);
      const double ez_next = next.expectation([&](Subset t) { return z_value(t, pi); });
      const double f0 = profile.profile()(1.0 / (z * z));
      if (ez_next > z * (1.0 - f0) + 1e-12) ++r.contraction_violations;
    }
  }
  if (r.lemma_steps <= k) {
    r.lemma_checked = true;
    r.z_at_lemma = r.expected_z[r.lemma_steps];
    r.lemma_pass = r.z_at_lemma <= std::sqrt(eps) + 1e-12;
  }
  return r;
}

}  // namespace dynaperc::evoset
