#include <doctest.h>

#include <cmath>
#include <sstream>
#include <type_traits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dynaperc/dist.hpp"
#include "dynaperc/error.hpp"
#include "dynaperc/expansion.hpp"
#include "dynaperc/rng.hpp"
#include "dynaperc/walk.hpp"

using namespace dynaperc;
using namespace dynaperc::expansion;
using torus::TorusGraph;
using torus::VertexSet;

namespace {

Kernel uniform2() { return Kernel::Constant(2, 2, 0.5); }

// Adaptive Gauss-Kronrod over each smooth piece of the integrand.
double quadrature(const std::function<double(double)>& f, std::vector<double> cuts) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (!(cuts[i + 1] > cuts[i])) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1], 15, 1e-14);
  }
  return total;
}

double profile_quadrature(const ExpansionProfile& p, double lo, double hi) {
  std::vector<double> cuts{lo};
  for (const auto& k : p.knots()) {
    if (k.r > lo && k.r < hi) cuts.push_back(k.r);
  }
  cuts.push_back(hi);
  return quadrature([&](double u) { return 1.0 / (u * p(u) * p(u)); }, cuts);
}

// Naive conditional escape probability under uniform pi.
double naive_escape(const Kernel& k, const VertexSet& s) {
  double total = 0.0;
  for (auto x : s.members()) {
    for (Eigen::Index y = 0; y < k.cols(); ++y) {
      if (!s.contains(static_cast<torus::Vertex>(y))) total += k(x, y);
    }
  }
  return total / static_cast<double>(s.size());
}

}  // namespace

static_assert(!std::is_constructible_v<CertifiedProfile, ExpansionProfile>);
static_assert(!std::is_invocable_v<decltype(&integral_mixing_bound), const DiagnosticProfile&, double, double, double>);

TEST_CASE("q flow and expansion examples") {
  const Measure pi = dist::uniform(2);
  CHECK(q_flow(uniform2(), pi, 0b11, 0b11) == doctest::Approx(1.0));
  CHECK(q_flow(uniform2(), pi, 0, 0b11) == 0.0);
  CHECK(q_flow(uniform2(), pi, 0b01, 0b10) == doctest::Approx(0.25));
  CHECK(expansion_phi(uniform2(), pi, 0b11) == 0.0);
  CHECK(expansion_phi(uniform2(), pi, 0b01) == doctest::Approx(0.5));
  CHECK_THROWS_AS(expansion_phi(uniform2(), pi, 0), InputError);
}

TEST_CASE("expansion routes agree and flows balance") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 2 + rng.below(6);
    const bool uniform_pi = trial % 2 == 0;
    const Measure pi = uniform_pi ? dist::uniform(m) : chain::random_full_support(m, rng);
    const auto k = chain::random_stationary_kernel(pi, 0.1, rng);
    const auto s = 1 + rng.below(chain::full_set(m) - 1);
    const double phi = expansion_phi(k, pi, s);
    CHECK(std::abs(phi - escape_probability(k, pi, s)) < 1e-10);
    CHECK(phi >= 0.0);
    CHECK(phi <= 1.0 + 1e-12);
    const auto c = chain::complement(s, m);
    CHECK(std::abs(q_flow(k, pi, s, c) - q_flow(k, pi, c, s)) < 1e-12);
    CHECK(std::abs(expansion_phi(k, pi, c) * chain::mass(pi, c) - phi * chain::mass(pi, s)) < 1e-12);
  }
}

TEST_CASE("torus window kernel expansion against a naive oracle") {
  const TorusGraph g(1, 8);
  const auto env = dynenv::sample_env(g, {0.5, 0.0, 1.0}, dynenv::EnvInit::all_open(), 1);
  const auto k = walk::window_kernel(env, 0.0, 1.0).matrix;
  const auto s = torus::half_box(g);
  CHECK(expansion_phi(k, dist::uniform(8), s) == doctest::Approx(naive_escape(k, s)).epsilon(1e-12));
}

TEST_CASE("exact profiles") {
  const auto two = profile_phi_exact({uniform2()}, dist::uniform(2));
  CHECK(two.profile()(0.5) == doctest::Approx(0.5));
  CHECK(two.profile()(0.9) == doctest::Approx(0.5));
  CHECK(two.profile().provenance() == Provenance::ExactEnumerated);

  // Complete graph K(x, y) = 1/k: phi(S) = 1 - |S|/k, so phi(r) = 1 - floor(r k)/k.
  for (int k = 3; k <= 9; ++k) {
    const auto prof = profile_phi_exact({Kernel::Constant(k, k, 1.0 / k)}, dist::uniform(static_cast<std::size_t>(k)));
    double last = 2.0;
    for (int j = 1; 2 * j <= k; ++j) {
      const double r = static_cast<double>(j) / k;
      const double v = prof.profile()(r);
      CHECK(v == doctest::Approx(1.0 - r));
      CHECK(v <= last);
      last = v;
    }
    CHECK(prof.profile()(0.75) == doctest::Approx(prof.profile()(0.5)));
  }
}

TEST_CASE("family profile is an upper envelope of the exact profile") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 4 + rng.below(5);
    const Measure pi = dist::uniform(m);
    const std::vector<Kernel> ks{chain::random_stationary_kernel(pi, 0.2, rng)};
    const auto exact = profile_phi_exact(ks, pi);
    const auto fam = profile_phi_family(ks, pi, default_family(pi, 10, trial));
    CHECK(fam.profile().provenance() == Provenance::FamilyRestricted);
    for (const auto& knot : fam.profile().knots()) {
      CHECK(fam.profile()(knot.r) >= exact.profile()(knot.r) - 1e-12);
    }
  }
}

TEST_CASE("integral bound with a constant profile") {
  const auto flat = [](double v) {
    return CertifiedProfile::from_exact(ExpansionProfile({{0.01, v}}, Provenance::ExactEnumerated));
  };
  for (double gamma : {0.1, 0.25, 0.5}) {
    for (double phi0 : {0.2, 0.5}) {
      for (double eps : {0.04, 0.1}) {
        const double pi_x = 0.25;
        const double c = 2.0 * (1.0 - gamma) * (1.0 - gamma) / (gamma * gamma * phi0 * phi0);
        const auto expected = static_cast<std::uint64_t>(1 + std::ceil(c * std::log(1.0 / (eps * pi_x))));
        CHECK(integral_mixing_bound(flat(phi0), gamma, pi_x, eps) == expected);
      }
    }
  }
  CHECK(integral_mixing_bound(flat(0.5), 0.5, 0.25, 0.1) == 31);
  CHECK(mixing_integral(flat(0.5), 0.25, 0.1) == doctest::Approx(4.0 * std::log(40.0)).epsilon(1e-12));

  CHECK(integral_mixing_bound(flat(0.5), 0.5, 0.25, 0.01) > integral_mixing_bound(flat(0.5), 0.5, 0.25, 0.1));
  CHECK(integral_mixing_bound(flat(0.6), 0.5, 0.25, 0.1) <= integral_mixing_bound(flat(0.5), 0.5, 0.25, 0.1));
  CHECK_THROWS_AS(integral_mixing_bound(flat(0.0), 0.5, 0.25, 0.1), DomainError);
  CHECK_THROWS_AS(integral_mixing_bound(flat(0.5), 0.0, 0.25, 0.1), DomainError);
  CHECK_THROWS_AS(CertifiedProfile::from_exact(ExpansionProfile({{0.1, 0.5}}, Provenance::FamilyRestricted)),
                  InputError);
}

TEST_CASE("closed form agrees with quadrature on random step profiles") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ExpansionProfile::Knot> knots;
    double r = 0.001 + 0.01 * rng.uniform();
    double v = 0.2 + rng.uniform();
    while (r < 0.5) {
      knots.push_back({r, v});
      r *= 1.2 + 2.0 * rng.uniform();
      v *= 0.5 + 0.5 * rng.uniform();
    }
    const ExpansionProfile p(knots, Provenance::ExactEnumerated);
    const double lo = 4.0 * knots.front().r * (1.0 + rng.uniform());
    const double hi = 4.0 / (0.01 + 0.5 * rng.uniform());
    const double closed = p.log_integral(lo, hi, 2);
    const double numeric = profile_quadrature(p, lo, hi);
    CHECK(std::abs(closed - numeric) <= 1e-9 * std::max(1.0, closed));
  }
}

TEST_CASE("torus analytic profile") {
  for (unsigned d : {1u, 2u}) {
    for (unsigned n : {8u, 16u}) {
      const double scale = 0.3;
      const auto prof = torus_analytic_profile(d, n, scale);
      CHECK(prof.profile().provenance() == Provenance::AnalyticTorusBound);
      const double volume = std::pow(static_cast<double>(n), static_cast<double>(d));
      auto f = [&](double u) { return scale / (n * std::pow(std::min(u, 0.5), 1.0 / d)); };
      for (double eps : {0.01, 0.1, 0.25}) {
        const double closed = torus_analytic_integral(d, n, scale, eps);
        const double numeric =
            quadrature([&](double u) { return 1.0 / (u * f(u) * f(u)); }, {4.0 / volume, 0.5, 4.0 / eps});
        CHECK(std::abs(closed - numeric) <= 1e-9 * closed);
        // The step profile sits below f, so its integral is larger, by at most 2^(2/d).
        const double stepped = mixing_integral(prof, 1.0 / volume, eps);
        CHECK(stepped >= closed * (1.0 - 1e-12));
        CHECK(stepped <= closed * std::pow(2.0, 2.0 / d) * (1.0 + 1e-12));
      }
      // log(1/eps) coefficient is (n/scale)^2 (1/2)^(2/d) exactly.
      const double slope = (torus_analytic_integral(d, n, scale, 0.001) - torus_analytic_integral(d, n, scale, 0.1)) /
                           std::log(100.0);
      CHECK(slope == doctest::Approx(n * n / (scale * scale) * std::pow(0.5, 2.0 / d)).epsilon(1e-12));
    }
  }
  // n^2 scaling of the leading coefficient.
  CHECK(torus_analytic_integral(1, 32, 0.3, 0.01) / torus_analytic_integral(1, 16, 0.3, 0.01) ==
        doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("environment-averaged expansion") {
  const Measure pi = dist::uniform(2);
  Kernel lazy(2, 2);
  lazy << 0.75, 0.25, 0.25, 0.75;
  const double avg = phi_env_exact({0.3, 0.7}, {uniform2(), lazy}, pi, 0b01);
  CHECK(avg == doctest::Approx(0.3 * 0.5 + 0.7 * 0.25));
  CHECK(phi_env_exact({1.0}, {lazy}, pi, 0b01) == doctest::Approx(expansion_phi(lazy, pi, 0b01)));

  const TorusGraph g(1, 8);
  const auto s = torus::half_box(g);
  const dynenv::DynParams frozen{0.5, 0.0, 1.0};
  const auto est = phi_env_torus(g, frozen, dynenv::EnvInit::all_open(), s, 1.0, 5, 1);
  const auto env = dynenv::sample_env(g, frozen, dynenv::EnvInit::all_open(), 1);
  CHECK(est.value == doctest::Approx(expansion_phi(walk::window_kernel(env, 0.0, 1.0).matrix, dist::uniform(8), s)));
}

TEST_CASE("torus lower-bound check") {
  CHECK(torus_gamma(1, 0.5) == doctest::Approx(0.5 * std::exp(-0.5) / 2.0));
  const double iso = torus::iso_profile(TorusGraph(1, 16)).value;
  const double c = torus_phi_witness(1, iso, 0.5);
  CHECK(c == doctest::Approx(torus_gamma(1, 0.5) * iso / 2.0));

  const TorusGraph g(1, 16);
  const auto s = torus::half_box(g);
  const auto open = dynenv::sample_env(g, {1.0, 0.25, 1.0}, dynenv::EnvInit::all_open(), 1);
  const auto rec = torus_phi_lower_bound_check(open, s, 0.0, 1.0, c);
  CHECK(rec.beta == doctest::Approx(1.0));
  CHECK(std::isfinite(rec.ratio));
  CHECK(rec.pass);

  const auto closed = dynenv::sample_env(g, {0.5, 0.0, 1.0}, dynenv::EnvInit::all_closed(), 1);
  const auto none = torus_phi_lower_bound_check(closed, s, 0.0, 1.0, c);
  CHECK(none.beta == 0.0);
  CHECK(none.bound == 0.0);
  CHECK(none.pass);

  int violations = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto env = dynenv::sample_env(g, {0.5, 0.25, 1.0}, dynenv::EnvInit::stationary(), seed);
    violations += torus_phi_lower_bound_check(env, s, 0.0, 1.0, c).pass ? 0 : 1;
  }
  CHECK(violations == 0);
}

TEST_CASE("profile text round trip") {
  const ExpansionProfile p({{0.125, 0.8}, {0.25, 0.5}}, Provenance::ExactEnumerated);
  std::stringstream buf;
  write_profile(buf, p);
  const auto q = read_profile(buf);
  CHECK(q.provenance() == p.provenance());
  REQUIRE(q.knots().size() == p.knots().size());
  for (std::size_t i = 0; i < q.knots().size(); ++i) {
    CHECK(q.knots()[i].r == p.knots()[i].r);
    CHECK(q.knots()[i].value == p.knots()[i].value);
  }
  std::stringstream bad("dynaperc-profile 9\n");
  CHECK_THROWS_AS(read_profile(bad), InputError);
  CHECK_THROWS_AS(ExpansionProfile({{0.1, 0.2}, {0.2, 0.3}}, Provenance::ExactEnumerated), InputError);
}
