#include <doctest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <vector>

#include "dynaperc/chain.hpp"
#include "dynaperc/error.hpp"
#include "dynaperc/parallel.hpp"
#include "dynaperc/rng.hpp"
#include "dynaperc/stats.hpp"

using namespace dynaperc;

TEST_CASE("seed derivation is deterministic and spreads") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(6) < 6);
  }
}

TEST_CASE("exponential sampler mean") {
  Rng r(3);
  std::vector<double> xs;
  for (int i = 0; i < 20000; ++i) xs.push_back(r.exponential(2.0));
  const auto est = stats::mean_ci(xs, 4.0);
  CHECK(est.ci.lo <= 0.5);
  CHECK(0.5 <= est.ci.hi);
}

TEST_CASE("wilson interval") {
  const auto i = stats::wilson(0, 100);
  CHECK(i.lo == doctest::Approx(0.0));
  CHECK(i.hi > 0.0);
  const auto j = stats::wilson(50, 100);
  CHECK(j.lo < 0.5);
  CHECK(j.hi > 0.5);
  const auto k = stats::wilson(100, 100);
  CHECK(k.hi == doctest::Approx(1.0));
}

TEST_CASE("summary statistics") {
  const std::vector<double> xs{4.0, 1.0, 3.0, 2.0};
  CHECK(stats::mean(xs) == doctest::Approx(2.5));
  CHECK(stats::variance(xs) == doctest::Approx(5.0 / 3.0));
  CHECK(stats::median(xs) == doctest::Approx(2.5));
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(stats::median({1.0, inf, inf}) == inf);
  CHECK(stats::quantile({1.0, 2.0, 3.0}, 0.0) == doctest::Approx(1.0));
  const std::vector<double> ys{1e16, 1.0, -1e16};
  CHECK(stats::kahan_sum(ys) == doctest::Approx(1.0));
}

TEST_CASE("binomial tail") {
  // P(Bin(4, 1/2) >= 3) = 5/16
  CHECK(stats::binomial_upper_tail(4, 0.5, 3) == doctest::Approx(5.0 / 16.0));
  CHECK(stats::binomial_upper_tail(4, 0.5, 0) == doctest::Approx(1.0));
  CHECK(stats::binomial_upper_tail(4, 0.5, 5) == doctest::Approx(0.0));
  CHECK(stats::binomial_upper_tail(3, 1.0, 3) == doctest::Approx(1.0));
}

TEST_CASE("power law fit recovers exponents") {
  std::vector<std::vector<double>> regs;
  std::vector<double> y;
  for (double n : {8.0, 16.0, 32.0}) {
    for (double inv_mu : {2.0, 8.0}) {
      regs.push_back({n, inv_mu});
      y.push_back(3.0 * n * n * inv_mu);
    }
  }
  const auto fit = stats::fit_power_law(regs, y);
  CHECK(fit.exponents[0] == doctest::Approx(2.0));
  CHECK(fit.exponents[1] == doctest::Approx(1.0));
  CHECK(std::exp(fit.log_prefactor) == doctest::Approx(3.0));
}

TEST_CASE("chi-square tail") {
  CHECK(stats::chi_square_sf(0.0, 3.0) == doctest::Approx(1.0));
  // Two degrees of freedom: sf(x) = exp(-x/2).
  CHECK(stats::chi_square_sf(4.0, 2.0) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("random stationary kernels") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + rng.below(5);
    const auto pi = chain::random_full_support(m, rng);
    CHECK(pi.sum() == doctest::Approx(1.0));
    const auto k = chain::random_stationary_kernel(pi, 0.5, rng);
    CHECK_NOTHROW(chain::check_kernel(k, pi));
    CHECK(chain::min_diagonal(k) >= 0.5 - 1e-12);
    CHECK(((pi.transpose() * k).transpose() - pi).cwiseAbs().maxCoeff() < 1e-12);
  }
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.5;
  CHECK_THROWS_AS(chain::check_kernel(bad, Eigen::Vector2d(0.5, 0.5)), InputError);
  CHECK_THROWS_AS(chain::check_full_support(Eigen::Vector2d(1.0, 0.0)), InputError);
}

TEST_CASE("subset helpers") {
  CHECK(chain::full_set(3) == 0b111);
  CHECK(chain::complement(0b001, 3) == 0b110);
  CHECK(chain::cardinality(0b1011) == 3);
  CHECK(chain::members(0b1010) == std::vector<std::size_t>{1, 3});
  CHECK(chain::mass(Eigen::Vector3d(0.2, 0.3, 0.5), 0b101) == doctest::Approx(0.7));
}

TEST_CASE("parallel_for covers every index once and rethrows") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw InputError("boom");
                  }),
                  InputError);
}
