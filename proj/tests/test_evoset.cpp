#include <doctest.h>

#include <cmath>
#include <map>

#include "dynaperc/dist.hpp"
#include "dynaperc/envlab.hpp"
#include "dynaperc/error.hpp"
#include "dynaperc/evoset.hpp"
#include "dynaperc/expansion.hpp"

using namespace dynaperc;
using namespace dynaperc::evoset;

namespace {

Kernel uniform2() { return Kernel::Constant(2, 2, 0.5); }

// P(S~ = T) by midpoint integration over a fine U grid.
std::map<Subset, double> grid_law(Subset s, const Kernel& k, const Measure& pi, int points) {
  std::map<Subset, double> out;
  for (int i = 0; i < points; ++i) {
    const double u = (i + 0.5) / points;
    out[evolve_step(s, k, pi, u)] += 1.0 / points;
  }
  return out;
}

InhomChain random_inhom(Rng& rng, std::size_t m, std::size_t steps, double min_diag, bool uniform_pi) {
  const Measure pi = uniform_pi ? dist::uniform(m) : chain::random_full_support(m, rng);
  std::vector<Kernel> ks;
  for (std::size_t j = 0; j < steps; ++j) ks.push_back(chain::random_stationary_kernel(pi, min_diag, rng));
  return InhomChain(pi, ks);
}

}  // namespace

TEST_CASE("threshold step examples") {
  const Measure pi = dist::uniform(2);
  CHECK(evolve_step(0, uniform2(), pi, 0.3) == 0);
  CHECK(evolve_step(0b01, uniform2(), pi, 0.5) == 0b11);
  CHECK(evolve_step(0b01, uniform2(), pi, 0.2) == 0b11);
  CHECK(evolve_step(0b01, uniform2(), pi, 0.7) == 0);
  Rng rng(1);
  const Measure pi4 = chain::random_full_support(4, rng);
  const auto k = chain::random_stationary_kernel(pi4, 0.3, rng);
  for (Subset s = 1; s < 15; ++s) CHECK(evolve_step(s, k, pi4, 0.0) == 0b1111);
  CHECK(evolve_step(0b1111, k, pi4, 0.99) == 0b1111);
}

TEST_CASE("exact step laws") {
  const Measure pi = dist::uniform(2);
  const auto empty = step_law(0, uniform2(), pi);
  REQUIRE(empty.entries.size() == 1);
  CHECK(empty.entries[0] == std::pair<Subset, double>{0, 1.0});
  const auto law = step_law(0b01, uniform2(), pi);
  CHECK(law.probability(0) == doctest::Approx(0.5));
  CHECK(law.probability(0b11) == doctest::Approx(0.5));
  const auto doob = doob_step_law(0b01, uniform2(), pi);
  REQUIRE(doob.entries.size() == 1);
  CHECK(doob.entries[0].first == 0b11);
  CHECK(doob.entries[0].second == doctest::Approx(1.0));
  CHECK_THROWS_AS(doob_step_law(0, uniform2(), pi), InputError);
}

TEST_CASE("step law matches U-grid integration") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 3 + rng.below(3);
    const Measure pi = chain::random_full_support(m, rng);
    const auto k = chain::random_stationary_kernel(pi, 0.2, rng);
    const Subset s = 1 + rng.below(chain::full_set(m) - 1);
    const auto law = step_law(s, k, pi);
    CHECK(std::abs(law.total() - 1.0) < 1e-12);
    const int points = 200000;
    const auto approx = grid_law(s, k, pi, points);
    for (const auto& [t, p] : approx) CHECK(std::abs(law.probability(t) - p) <= (m + 1.0) / points);
    for (const auto& [t, p] : law.entries) {
      CHECK(p > 0.0);
      CHECK(std::abs((approx.count(t) ? approx.at(t) : 0.0) - p) <= (m + 1.0) / points);
    }
  }
}

TEST_CASE("martingale, Doob normalization and duality on random chains") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 2 + rng.below(5);
    const Measure pi = trial % 2 ? dist::uniform(m) : chain::random_full_support(m, rng);
    const auto k = chain::random_stationary_kernel(pi, 0.05 * rng.uniform(), rng);
    const Subset s = 1 + rng.below(chain::full_set(m));
    CHECK(martingale_defect(s, k, pi) < 1e-12);
    CHECK(doob_normalization_defect(s, k, pi) < 1e-12);
    CHECK(complement_duality_defect(s, k, pi) < 1e-12);
  }
}

TEST_CASE("psi values and the psi-phi inequality") {
  const Measure pi = dist::uniform(2);
  CHECK(expected_sqrt_ratio(0b01, Kernel::Identity(2, 2), pi) == doctest::Approx(0.0));
  CHECK(expected_sqrt_ratio(0b01, uniform2(), pi) == doctest::Approx(1.0 - std::sqrt(2.0) / 2.0));
  Rng rng(8);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 2 + rng.below(5);
    const Measure pi_m = chain::random_full_support(m, rng);
    const auto k = chain::random_stationary_kernel(pi_m, 0.05 + 0.5 * rng.uniform(), rng);
    const Subset s = 1 + rng.below(chain::full_set(m) - 1);
    const double psi = expected_sqrt_ratio(s, k, pi_m);
    CHECK(psi >= -1e-12);
    CHECK(psi <= 1.0);
    if (psi_phi_slack(s, k, pi_m) < -1e-12) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("evolving-set runs") {
  Rng rng(9);
  const auto ch = random_inhom(rng, 5, 8, 0.3, false);
  const auto full = run_evoset(ch, 0b11111, 8, 1);
  for (const auto& st : full.states) CHECK(st.set == 0b11111);

  const Subset s0 = 0b00101;
  const double start = chain::mass(ch.pi(), s0);
  std::vector<double> finals;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) finals.push_back(run_evoset(ch, s0, 8, seed).states.back().mass);
  const auto est = stats::mean_ci(finals, 4.0);
  CHECK(est.ci.lo <= start);
  CHECK(start <= est.ci.hi);

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto tr = doob_run(ch, 0b00001, 8, seed);
    for (const auto& st : tr.states) CHECK(st.set != 0);
    CHECK_FALSE(tr.absorbed);
  }
}

TEST_CASE("Doob weights recover ordinary expectations") {
  Rng rng(10);
  const auto ch = random_inhom(rng, 4, 5, 0.3, false);
  const auto ordinary = propagate(ch, 0b0011, 5, false);
  const double truth = ordinary.laws.back().expectation([&](Subset s) { return chain::cardinality(s) * 1.0; });
  std::vector<double> weighted;
  for (std::uint64_t seed = 0; seed < 20000; ++seed) {
    const auto tr = doob_run(ch, 0b0011, 5, seed);
    weighted.push_back(tr.weights.back() * static_cast<double>(chain::cardinality(tr.states.back().set)));
  }
  const auto est = stats::mean_ci(weighted, 4.0);
  CHECK(est.ci.lo <= truth);
  CHECK(truth <= est.ci.hi);
}

TEST_CASE("marginal identity") {
  Rng rng(11);
  const auto ch = random_inhom(rng, 5, 6, 0.0, false);
  CHECK(marginal_identity_check(ch, 2, 0).max_error == 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_inhom(rng, 5, 6, 0.05, trial % 2 == 0);
    CHECK(marginal_identity_check(c, rng.below(5), 6).max_error <= 1e-9);
  }
  const auto cx = envlab::counterexample_chain();
  const InhomChain path(cx.pi, {cx.kernels[1], cx.kernels[0], cx.kernels[1], cx.kernels[1]});
  CHECK(marginal_identity_check(path, 0, 4).max_error <= 1e-12);
}

TEST_CASE("Z process bounds") {
  const std::size_t m = 4;
  const InhomChain lazy(dist::uniform(m), {0.5 * (Kernel::Identity(m, m) + Kernel::Constant(m, m, 0.25))});
  const auto zero = doob_z_bound_check(lazy, 1, 0, 0.1);
  CHECK(zero.expected_z[0] == doctest::Approx(std::sqrt(4.0)));
  CHECK(zero.chi[0] == doctest::Approx(std::sqrt(3.0)));

  const auto two = doob_z_bound_check(InhomChain(dist::uniform(2), {uniform2()}), 0, 1, 0.1);
  CHECK(two.chi[1] == doctest::Approx(0.0));
  CHECK(two.chi[1] <= two.expected_z[1] + 1e-9);

  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const Measure pi = dist::uniform(4);
    std::vector<Kernel> ks;
    for (int j = 0; j < 3; ++j) ks.push_back(chain::random_stationary_kernel(pi, 0.5, rng));
    const InhomChain ch(pi, ks, true);
    const auto psi = psi_profile(ch);
    const auto steps = psi_step_count(psi, 0.25, 0.04);
    const auto rep = doob_z_bound_check(ch, 0, steps, 0.04);
    CHECK(rep.chi_violations == 0);
    CHECK(rep.contraction_violations == 0);
    CHECK(rep.lemma_checked);
    CHECK(rep.z_at_lemma <= 0.2 + 1e-12);
    CHECK(rep.lemma_pass);
  }
}

TEST_CASE("capability and input errors") {
  const Measure pi = dist::uniform(3);
  Kernel bad = Kernel::Identity(3, 3);
  bad(0, 0) = 0.5;
  bad(0, 1) = 0.5;
  CHECK_THROWS_AS(InhomChain(pi, {bad}), InputError);
  const InhomChain big(dist::uniform(15), {Kernel::Identity(15, 15)});
  CHECK_THROWS_AS(marginal_identity_check(big, 0, 1), CapabilityError);
  CHECK_THROWS_AS(InhomChain(pi, {Kernel::Identity(3, 3)}).kernel(2), InputError);
}
