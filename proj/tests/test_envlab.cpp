#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dynaperc/envlab.hpp"
#include "dynaperc/error.hpp"

using namespace dynaperc;
using namespace dynaperc::envlab;

namespace {

double brute_tail(const FiniteEnvChain& ch, std::size_t zeta0, std::size_t x, std::size_t k, double threshold) {
  double tail = 0.0;
  for_each_path(ch, zeta0, k, [&](const std::vector<std::size_t>& path, double w) {
    if (dist::chi(quenched_law(ch, zeta0, path, x).law, ch.pi) >= threshold) tail += w;
  });
  return tail;
}

}  // namespace

TEST_CASE("construction checks") {
  const Kernel id = Kernel::Identity(2, 2);
  Eigen::MatrixXd r(1, 1);
  r << 0.9;
  CHECK_THROWS_AS(FiniteEnvChain(r, {id}, dist::uniform(2)), InputError);
  r << 1.0;
  CHECK_NOTHROW(FiniteEnvChain(r, {id}, dist::uniform(2)));
  Kernel skew(2, 2);
  skew << 0.0, 1.0, 0.0, 1.0;
  CHECK_THROWS_AS(FiniteEnvChain(r, {skew}, dist::uniform(2)), InputError);
}

TEST_CASE("annealed kernel") {
  Rng rng(1);
  const auto single = random_chain(1, 3, 0.2, false, rng);
  const auto a1 = annealed_kernel(single);
  CHECK((a1.Q - single.kernels[0]).cwiseAbs().maxCoeff() < 1e-15);

  const auto cx = counterexample_chain();
  for (std::size_t z = 0; z < 2; ++z) {
    for (std::size_t x = 0; x < 2; ++x) CHECK(dist::tv(annealed_law(cx, z, x, 1), cx.pi) == 0.0);
  }

  const auto two = random_chain(2, 3, 0.1, false, rng);
  CHECK(annealed_kernel(two).max_row_sum_error() < 1e-12);
  CHECK(annealed_kernel(variant_chain(two)).max_row_sum_error() < 1e-12);
}

TEST_CASE("quenched laws") {
  const auto cx = counterexample_chain();
  CHECK(quenched_law(cx, 0, {}, 1).law(1) == 1.0);
  for_each_path(cx, 0, 6, [&](const std::vector<std::size_t>& path, double) {
    const auto q = quenched_law(cx, 0, path, 0);
    CHECK(q.law.maxCoeff() == 1.0);
    CHECK(dist::tv(q.law, cx.pi) == doctest::Approx(0.5));
  });

  Eigen::MatrixXd r(2, 2);
  r << 1.0, 0.0, 0.5, 0.5;
  const FiniteEnvChain sticky(r, cx.kernels, cx.pi);
  CHECK(quenched_law(sticky, 0, {1}, 0).off_support);
  CHECK_FALSE(quenched_law(sticky, 1, {0}, 0).off_support);
}

TEST_CASE("annealed law equals the path sum of quenched laws") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ch = random_chain(1 + rng.below(3), 3, 0.1 * (trial % 5), trial % 2 == 0, rng);
    for (const auto& c : std::vector<FiniteEnvChain>{ch, variant_chain(ch)}) {
      for (std::size_t k : {0u, 1u, 4u}) {
        const auto a = annealed_law(c, 0, 1, k);
        const auto b = annealed_law_by_paths(c, 0, 1, k);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(dist::tv(a, c.pi) <= expected_quenched_tv(c, 0, 1, k) + 1e-12);
      }
    }
  }
}

TEST_CASE("variant chain") {
  Rng rng(3);
  const auto single = random_chain(1, 4, 0.0, false, rng);
  const auto v = variant_chain(single);
  const Kernel half = 0.5 * (single.kernels[0] + Kernel::Identity(4, 4));
  CHECK((v.step_kernel(0, 0) - half).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(variant_chain(v), InputError);

  const auto ch = random_chain(3, 4, 0.0, false, rng);
  const auto vc = variant_chain(ch);
  CHECK(vc.gamma() >= 0.5);
  for (const auto& k : vc.effective_kernels()) CHECK_NOTHROW(chain::check_kernel(k, vc.pi));
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) CHECK_NOTHROW(chain::check_kernel(vc.step_kernel(a, b), vc.pi));
  }
}

TEST_CASE("the counterexample is outside the theorem") {
  const auto cx = counterexample_chain();
  CHECK(cx.gamma() == 0.0);
  CHECK_THROWS_AS(theorem_2_1_check(cx, 0, 0.1), DomainError);
}

TEST_CASE("theorem check on small instances") {
  Rng rng(4);
  const auto single = random_chain(1, 4, 0.5, true, rng);
  const auto rep1 = theorem_2_1_check(single, 0, 0.1);
  CHECK(rep1.pass);
  CHECK(rep1.psi_not_weaker);

  const auto two = random_chain(2, 4, 0.5, true, rng);
  const auto rep2 = theorem_2_1_check(two, 0, 0.04);
  CHECK(rep2.threshold == doctest::Approx(std::pow(0.04, 0.25)));
  CHECK(rep2.pass);
  for (const auto& t : rep2.tails) {
    CHECK(t.tail <= rep2.threshold);
    CHECK(t.method == "exact");
  }

  const auto variant = variant_chain(random_chain(2, 3, 0.0, false, rng));
  const auto rep3 = theorem_2_1_check(variant, 1, 0.1);
  CHECK(rep3.gamma == doctest::Approx(0.5));
  CHECK(rep3.pass);
}

TEST_CASE("pruned tree walk equals brute-force path enumeration") {
  Rng rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    const auto base = random_chain(2 + rng.below(2), 3, trial % 2 ? 0.3 : 0.0, false, rng);
    const auto ch = trial % 2 ? base : variant_chain(base);
    TheoremOptions opts;
    opts.steps = 6;
    const auto rep = theorem_2_1_check(ch, 0, 0.5, opts);
    for (const auto& t : rep.tails) {
      CHECK(t.tail == doctest::Approx(brute_tail(ch, t.zeta0, 0, 6, rep.threshold)).epsilon(1e-12));
    }
    opts.mode = dist::Mode::MonteCarlo;
    opts.mc_paths = 4000;
    const auto mc = theorem_2_1_check(ch, 0, 0.5, opts);
    for (std::size_t z = 0; z < mc.tails.size(); ++z) {
      CHECK(mc.tails[z].ci.lo <= rep.tails[z].tail + 1e-12);
      CHECK(rep.tails[z].tail <= mc.tails[z].ci.hi + 1e-12);
    }
  }
}

TEST_CASE("node budget falls back") {
  Rng rng(6);
  const auto ch = random_chain(3, 4, 0.5, false, rng);
  TheoremOptions opts;
  opts.node_budget = 5;
  const auto rep = theorem_2_1_check(ch, 0, 0.04, opts);
  for (const auto& t : rep.tails) CHECK((t.method == "exact-bound" || t.method == "mc"));
}

TEST_CASE("torus blocks as an inhomogeneous chain") {
  const torus::TorusGraph g(1, 8);
  const auto env = dynenv::sample_env(g, {0.5, 0.5, 4.0}, dynenv::EnvInit::stationary(), 2);
  const auto ch = inhom_from_blocks(walk::block_chain(env, 1.0));
  CHECK(ch.length() == 4);
  CHECK((ch.law(3, 4) - walk::exact_quenched_distribution(env, 3, 4.0)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("chain spec round trip") {
  Rng rng(7);
  const auto ch = variant_chain(random_chain(2, 3, 0.2, false, rng));
  std::stringstream buf;
  write_chain(buf, ch);
  const auto back = read_chain(buf);
  CHECK(back.lazy_coupled);
  CHECK(back.R == ch.R);
  CHECK(back.pi == ch.pi);
  for (std::size_t z = 0; z < 2; ++z) CHECK(back.kernels[z] == ch.kernels[z]);
  std::stringstream bad("dynaperc-chain 2\n");
  CHECK_THROWS_AS(read_chain(bad), InputError);
}
