#include "dynaperc/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <map>
#include <ostream>
#include <sstream>

#include "dynaperc/dist.hpp"
#include "dynaperc/error.hpp"
#include "dynaperc/parallel.hpp"
#include "dynaperc/rng.hpp"
#include "dynaperc/walk.hpp"

namespace dynaperc::expansion {

namespace {

constexpr double kHalfTolerance = 1e-12;

void check_shape(const Kernel& k, const Measure& pi) {
  if (k.rows() != k.cols() || k.rows() != pi.size()) throw InputError("kernel/pi shape mismatch");
}

void check_mask_states(const Measure& pi) {
  if (static_cast<std::size_t>(pi.size()) > chain::kMaxMaskStates) {
    throw CapabilityError("mask subsets support at most 63 states");
  }
}

}  // namespace

double q_flow(const Kernel& k, const Measure& pi, Subset a, Subset b) {
  check_shape(k, pi);
  check_mask_states(pi);
  double total = 0.0;
  for (auto x : chain::members(a)) {
    double row = 0.0;
    for (auto y : chain::members(b)) row += k(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    total += pi(static_cast<Eigen::Index>(x)) * row;
  }
  return total;
}

double q_flow(const Kernel& k, const Measure& pi, const torus::VertexSet& a, const torus::VertexSet& b) {
  check_shape(k, pi);
  if (a.universe() != static_cast<std::size_t>(pi.size()) || b.universe() != a.universe()) {
    throw InputError("vertex set universe does not match kernel");
  }
  const auto bm = b.members();
  double total = 0.0;
  for (auto x : a.members()) {
    double row = 0.0;
    for (auto y : bm) row += k(x, y);
    total += pi(x) * row;
  }
  return total;
}

double expansion_phi(const Kernel& k, const Measure& pi, Subset s) {
  if (s == 0) throw InputError("expansion of the empty set is undefined");
  const auto m = static_cast<std::size_t>(pi.size());
  return q_flow(k, pi, s, chain::complement(s, m)) / chain::mass(pi, s);
}

double expansion_phi(const Kernel& k, const Measure& pi, const torus::VertexSet& s) {
  if (s.empty()) throw InputError("expansion of the empty set is undefined");
  double mass = 0.0;
  for (auto x : s.members()) mass += pi(x);
  return q_flow(k, pi, s, s.complement()) / mass;
}

double escape_probability(const Kernel& k, const Measure& pi, Subset s) {
  check_shape(k, pi);
  if (s == 0) throw InputError("expansion of the empty set is undefined");
  // Joint law of (X_0, X_1) under stationarity, then condition on X_0 in S.
  const Eigen::MatrixXd joint = pi.asDiagonal() * k;
  double in_s = 0.0;
  double escape = 0.0;
  for (Eigen::Index x = 0; x < joint.rows(); ++x) {
    if (!chain::contains(s, static_cast<std::size_t>(x))) continue;
    for (Eigen::Index y = 0; y < joint.cols(); ++y) {
      in_s += joint(x, y);
      if (!chain::contains(s, static_cast<std::size_t>(y))) escape += joint(x, y);
    }
  }
  return escape / in_s;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::ExactEnumerated: return "exact-enumerated";
    case Provenance::FamilyRestricted: return "family-restricted";
    case Provenance::AnalyticTorusBound: return "analytic-torus-bound";
  }
  return "unknown";
}

Provenance parse_provenance(const std::string& text) {
  if (text == "exact-enumerated") return Provenance::ExactEnumerated;
  if (text == "family-restricted") return Provenance::FamilyRestricted;
  if (text == "analytic-torus-bound") return Provenance::AnalyticTorusBound;
  throw InputError("unknown profile provenance '" + text + "'");
}

ExpansionProfile::ExpansionProfile(std::vector<Knot> knots, Provenance provenance)
    : knots_(std::move(knots)), provenance_(provenance) {
  if (knots_.empty()) throw InputError("profile needs at least one knot");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!(knots_[i].r > 0.0) || knots_[i].r > 0.5 + kHalfTolerance) throw InputError("profile knots must lie in (0, 1/2]");
    if (!(knots_[i].value >= 0.0)) throw InputError("profile values must be >= 0");
    if (i > 0 && !(knots_[i].r > knots_[i - 1].r)) throw InputError("profile knots must be strictly increasing");
    if (i > 0 && knots_[i].value > knots_[i - 1].value * (1.0 + 1e-12) + 1e-300) {
      throw InputError("profile must be nonincreasing");
    }
  }
  if (knots_.back().r < 0.5 - kHalfTolerance) knots_.push_back({0.5, knots_.back().value});
  knots_.back().r = std::min(knots_.back().r, 0.5);
}

double ExpansionProfile::operator()(double r) const {
  if (r < knots_.front().r * (1.0 - 1e-12)) throw InputError("profile evaluated below its domain");
  // Knots within rounding distance of r count as reached.
  const double key = r * (1.0 + 1e-12);
  auto it = std::upper_bound(knots_.begin(), knots_.end(), key, [](double v, const Knot& k) { return v < k.r; });
  if (it == knots_.begin()) return knots_.front().value;
  return std::prev(it)->value;
}

double ExpansionProfile::log_integral(double lo, double hi, int power) const {
  if (!(hi > lo)) return 0.0;
  if (lo < knots_.front().r * (1.0 - 1e-12)) throw InputError("integral lower limit below the profile domain");
  double total = 0.0;
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    const double start = std::max(lo, knots_[i].r);
    const double end = i + 1 < knots_.size() ? std::min(hi, knots_[i + 1].r) : hi;
    if (!(end > start)) continue;
    const double v = knots_[i].value;
    if (v <= 0.0) throw DomainError("profile vanishes on the integration range; the mixing integral diverges");
    total += std::log(end / start) / std::pow(v, power);
  }
  return total;
}

CertifiedProfile CertifiedProfile::from_exact(ExpansionProfile p) {
  if (p.provenance() != Provenance::ExactEnumerated) throw InputError("profile is not exact-enumerated");
  return CertifiedProfile(std::move(p));
}

CertifiedProfile CertifiedProfile::from_analytic(ExpansionProfile p) {
  if (p.provenance() != Provenance::AnalyticTorusBound) throw InputError("profile is not an analytic bound");
  return CertifiedProfile(std::move(p));
}

DiagnosticProfile::DiagnosticProfile(ExpansionProfile p) : profile_(std::move(p)) {}

namespace {

// Lower-left Pareto frontier of (mass, value) points.
class Frontier {
 public:
  void add(double mass, double value) {
    // Equal masses reached by different summation orders must share a key.
    const auto near = points_.lower_bound(mass * (1.0 - 1e-12));
    if (near != points_.end() && near->first <= mass * (1.0 + 1e-12)) mass = near->first;
    auto it = points_.upper_bound(mass);
    if (it != points_.begin() && std::prev(it)->second <= value) return;
    it = points_.lower_bound(mass);
    while (it != points_.end() && it->second >= value) it = points_.erase(it);
    points_[mass] = value;
  }

  ExpansionProfile profile(Provenance provenance) const {
    if (points_.empty()) throw InputError("no sets with mass <= 1/2");
    std::vector<ExpansionProfile::Knot> knots;
    for (const auto& [m, v] : points_) knots.push_back({std::min(m, 0.5), v});
    return ExpansionProfile(std::move(knots), provenance);
  }

 private:
  std::map<double, double> points_;
};

}  // namespace

ExpansionProfile profile_from_samples(std::vector<std::pair<double, double>> samples, Provenance provenance) {
  Frontier f;
  for (const auto& [m, v] : samples) {
    if (m > 0.0 && m <= 0.5 + kHalfTolerance) f.add(m, v);
  }
  return f.profile(provenance);
}

CertifiedProfile profile_phi_exact(const std::vector<Kernel>& kernels, const Measure& pi) {
  const auto m = static_cast<std::size_t>(pi.size());
  if (m > kExactProfileLimit) {
    throw CapabilityError("exact profile enumerates 2^m subsets; m = " + std::to_string(m) + " exceeds 24");
  }
  if (kernels.empty()) throw InputError("profile needs at least one kernel");
  Frontier frontier;
  for (const auto& k : kernels) {
    check_shape(k, pi);
    const Eigen::MatrixXd flow = pi.asDiagonal() * k;
    // Gray-code walk over subsets; boundary = Q(S, S^c) updated in O(m) per flip.
    Subset s = 0;
    double boundary = 0.0;
    double mass = 0.0;
    const std::uint64_t total = std::uint64_t{1} << m;
    for (std::uint64_t i = 1; i < total; ++i) {
      const auto v = static_cast<Eigen::Index>(std::countr_zero(i));
      const Subset bit = Subset{1} << v;
      double into_v = 0.0;   // Q(S \ {v}, {v})
      double out_of_v = 0.0; // Q({v}, S^c \ {v})
      for (Eigen::Index y = 0; y < static_cast<Eigen::Index>(m); ++y) {
        if (y == v) continue;
        if (chain::contains(s, static_cast<std::size_t>(y))) {
          into_v += flow(y, v);
        } else {
          out_of_v += flow(v, y);
        }
      }
      if (s & bit) {
        s &= ~bit;
        mass -= pi(v);
        boundary += into_v - out_of_v;
      } else {
        s |= bit;
        mass += pi(v);
        boundary += out_of_v - into_v;
      }
      if (s == 0 || mass > 0.5 + kHalfTolerance) continue;
      frontier.add(mass, std::max(0.0, boundary) / mass);
    }
  }
  return CertifiedProfile::from_exact(frontier.profile(Provenance::ExactEnumerated));
}

DiagnosticProfile profile_phi_family(const std::vector<Kernel>& kernels, const Measure& pi,
                                     const std::vector<Subset>& family) {
  std::vector<std::pair<double, double>> samples;
  for (const auto& k : kernels) {
    for (Subset s : family) {
      if (s == 0) continue;
      const double mass = chain::mass(pi, s);
      if (mass > 0.5 + kHalfTolerance) continue;
      samples.emplace_back(mass, expansion_phi(k, pi, s));
    }
  }
  return DiagnosticProfile(profile_from_samples(std::move(samples), Provenance::FamilyRestricted));
}

std::vector<Subset> default_family(const Measure& pi, std::size_t random_sets, std::uint64_t seed) {
  const auto m = static_cast<std::size_t>(pi.size());
  check_mask_states(pi);
  std::vector<Subset> family;
  for (std::size_t x = 0; x < m; ++x) family.push_back(Subset{1} << x);
  for (std::size_t start = 0; start < m; ++start) {
    Subset s = 0;
    for (std::size_t len = 1; len <= m / 2; ++len) {
      s |= Subset{1} << ((start + len - 1) % m);
      family.push_back(s);
    }
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < random_sets; ++i) family.push_back(rng.next_u64() & chain::full_set(m));
  return family;
}

CertifiedProfile torus_analytic_profile(unsigned d, unsigned n, double scale) {
  if (!(scale > 0.0)) throw InputError("analytic profile scale must be positive");
  const double volume = std::pow(static_cast<double>(n), static_cast<double>(d));
  auto f = [&](double r) { return scale / (static_cast<double>(n) * std::pow(std::min(r, 0.5), 1.0 / d)); };
  std::vector<ExpansionProfile::Knot> knots;
  for (double r = 1.0 / volume; r < 0.5; r *= 2.0) knots.push_back({r, f(std::min(2.0 * r, 0.5))});
  knots.push_back({0.5, f(0.5)});
  return CertifiedProfile::from_analytic(ExpansionProfile(std::move(knots), Provenance::AnalyticTorusBound));
}

double torus_analytic_integral(unsigned d, unsigned n, double scale, double eps) {
  const double nd = static_cast<double>(n);
  const double lo = 4.0 / std::pow(nd, static_cast<double>(d));
  const double hi = 4.0 / eps;
  const double k = nd * nd / (scale * scale);
  const double two_over_d = 2.0 / static_cast<double>(d);
  double total = 0.0;
  if (lo < 0.5) total += k * (static_cast<double>(d) / 2.0) * (std::pow(0.5, two_over_d) - std::pow(lo, two_over_d));
  const double start = std::max(lo, 0.5);
  if (hi > start) total += k * std::pow(0.5, two_over_d) * std::log(hi / start);
  return total;
}

double mixing_integral(const CertifiedProfile& profile, double pi_x, double eps) {
  if (!(pi_x > 0.0 && pi_x <= 1.0)) throw InputError("pi(x) must lie in (0, 1]");
  if (!(eps > 0.0 && eps < 1.0)) throw InputError("eps must lie in (0, 1)");
  return profile.profile().log_integral(4.0 * pi_x, 4.0 / eps, 2);
}

std::uint64_t integral_mixing_bound(const CertifiedProfile& profile, double gamma, double pi_x, double eps) {
  if (!(gamma > 0.0 && gamma <= 0.5)) throw DomainError("gamma must lie in (0, 1/2]");
  const double c = 2.0 * (1.0 - gamma) * (1.0 - gamma) / (gamma * gamma);
  const double steps = 1.0 + c * mixing_integral(profile, pi_x, eps);
  return static_cast<std::uint64_t>(std::ceil(steps));
}

stats::Estimate phi_env_torus(const torus::TorusGraph& g, const dynenv::DynParams& params,
                              const dynenv::EnvInit& init, const torus::VertexSet& s, double window,
                              std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw InputError("phi_env needs samples >= 1");
  dynenv::DynParams run = params;
  run.horizon = window;
  const Measure pi = dist::uniform(g.vertex_count());
  std::vector<double> values(samples);
  parallel_for(samples, [&](std::size_t i) {
    const auto env = dynenv::sample_env(g, run, init, derive_seed(seed, i));
    values[i] = expansion_phi(walk::window_kernel(env, 0.0, window).matrix, pi, s);
  });
  return stats::mean_ci(values);
}

double phi_env_exact(const std::vector<double>& weights, const std::vector<Kernel>& kernels, const Measure& pi,
                     Subset s) {
  if (weights.size() != kernels.size() || kernels.empty()) throw InputError("weights/kernels mismatch");
  Kernel avg = Kernel::Zero(pi.size(), pi.size());
  for (std::size_t j = 0; j < kernels.size(); ++j) avg += weights[j] * kernels[j];
  return expansion_phi(avg, pi, s);
}

double torus_gamma(unsigned d, double half_window) {
  const double h = half_window;
  return std::min(h * std::exp(-h) / (2.0 * d), std::exp(-h));
}

double torus_phi_witness(unsigned d, double iso_constant, double half_window) {
  return torus_gamma(d, half_window) * iso_constant / (2.0 * d);
}

TorusBoundRecord torus_phi_lower_bound_check(const dynenv::EnvTrajectory& env, const torus::VertexSet& s,
                                             double a, double b, double witness,
                                             std::size_t mc_replicas, std::uint64_t walk_seed) {
  const auto& g = env.graph();
  if (s.empty() || s.mass() > 0.5 + kHalfTolerance) throw InputError("need nonempty S with pi(S) <= 1/2");
  const auto boundary = torus::edge_boundary(g, s);
  TorusBoundRecord rec;
  const auto open = dynenv::count_open_throughout(env, boundary, 0.5 * (a + b), b);
  rec.beta = static_cast<double>(open) / static_cast<double>(boundary.size());
  if (g.vertex_count() <= walk::kDefaultStateBudget) {
    const Measure pi = dist::uniform(g.vertex_count());
    rec.phi = expansion_phi(walk::window_kernel(env, a, b).matrix, pi, s);
    rec.phi_ci = {rec.phi, rec.phi};
  } else {
    if (mc_replicas == 0) throw InputError("Monte Carlo fallback needs replicas >= 1");
    const auto members = s.members();
    std::vector<std::uint8_t> escaped(mc_replicas, 0);
    parallel_for(mc_replicas, [&](std::size_t r) {
      Rng pick(derive_seed(walk_seed, 2 * r));
      const auto x0 = members[pick.below(members.size())];
      escaped[r] = s.contains(walk::position_after(env, x0, a, b, derive_seed(walk_seed, 2 * r + 1))) ? 0 : 1;
    });
    std::size_t hits = 0;
    for (auto e : escaped) hits += e;
    rec.phi = static_cast<double>(hits) / static_cast<double>(mc_replicas);
    rec.phi_ci = stats::wilson(hits, mc_replicas);
    rec.method = "mc";
  }
  const double scale = static_cast<double>(g.side()) * std::pow(s.mass(), 1.0 / g.dim());
  rec.bound = witness * rec.beta / scale;
  rec.ratio = rec.beta > 0.0 ? rec.phi / (rec.beta / scale) : std::numeric_limits<double>::infinity();
  rec.pass = rec.method == "exact" ? rec.phi >= rec.bound - 1e-12 : rec.phi_ci.hi >= rec.bound;
  return rec;
}

void write_profile(std::ostream& out, const ExpansionProfile& p) {
  out << "dynaperc-profile 1\nprovenance " << to_string(p.provenance()) << '\n';
  for (const auto& k : p.knots()) out << "knot " << dist::format_number(k.r) << ' ' << dist::format_number(k.value) << '\n';
}

ExpansionProfile read_profile(std::istream& in) {
  std::string line;
  std::string word;
  int version = 0;
  if (!std::getline(in, line)) throw InputError("empty profile file");
  std::istringstream head(line);
  if (!(head >> word >> version) || word != "dynaperc-profile" || version != 1) throw InputError("not a profile file");
  std::optional<Provenance> provenance;
  std::vector<ExpansionProfile::Knot> knots;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    if (!(row >> word) || word.starts_with('#')) continue;
    if (word == "provenance") {
      std::string tag;
      row >> tag;
      provenance = parse_provenance(tag);
    } else if (word == "knot") {
      ExpansionProfile::Knot k{};
      if (!(row >> k.r >> k.value)) throw InputError("malformed knot line: " + line);
      knots.push_back(k);
    } else {
      throw InputError("unknown profile line: " + line);
    }
  }
  if (!provenance) throw InputError("profile file lacks a provenance line");
  return ExpansionProfile(std::move(knots), *provenance);
}

}  // namespace dynaperc::expansion
