#include <doctest.h>

#include <cmath>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "dynaperc/dist.hpp"
#include "dynaperc/dynenv.hpp"
#include "dynaperc/error.hpp"
#include "dynaperc/rng.hpp"
#include "dynaperc/stats.hpp"
#include "dynaperc/walk.hpp"

using namespace dynaperc;
using namespace dynaperc::walk;
using dynenv::DynParams;
using dynenv::EnvInit;
using dynenv::sample_env;
using torus::TorusGraph;

namespace {

// Jump generator of the walk for a fixed edge configuration.
Eigen::MatrixXd generator(const TorusGraph& g, const std::vector<std::uint8_t>& config) {
  const auto m = static_cast<Eigen::Index>(g.vertex_count());
  Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(m, m);
  const double rate = 1.0 / g.degree();
  for (torus::EdgeId e = 0; e < g.edge_count(); ++e) {
    if (!config[e]) continue;
    const auto ends = g.edge_ends(e);
    gen(ends.lo, ends.hi) += rate;
    gen(ends.hi, ends.lo) += rate;
    gen(ends.lo, ends.lo) -= rate;
    gen(ends.hi, ends.hi) -= rate;
  }
  return gen;
}

// Piecewise matrix exponential between flip events.
Eigen::MatrixXd oracle_kernel(const EnvTrajectory& env, double a, double b) {
  const auto& g = env.graph();
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(g.vertex_count(), g.vertex_count());
  double t = a;
  std::vector<double> cuts;
  for (const auto& ev : env.events()) {
    if (ev.time > a && ev.time < b) cuts.push_back(ev.time);
  }
  cuts.push_back(b);
  for (double c : cuts) {
    if (c > t) k = k * (generator(g, env.configuration_at(t)) * (c - t)).exp();
    t = c;
  }
  return k;
}

EnvTrajectory frozen(const TorusGraph& g, bool open, double horizon) {
  return sample_env(g, {0.5, 0.0, horizon}, open ? EnvInit::all_open() : EnvInit::all_closed(), 1);
}

}  // namespace

TEST_CASE("closed environment freezes the walker") {
  const TorusGraph g(2, 4);
  const auto env = frozen(g, false, 10.0);
  const std::vector<double> q{0.0, 5.0, 10.0};
  const auto path = simulate_walk(env, 6, 10.0, 1, q);
  CHECK(path.jumps.empty());
  for (auto v : path.positions) CHECK(v == 6);
  const auto law = exact_quenched_distribution(env, 6, 10.0);
  CHECK(law(6) == doctest::Approx(1.0));
}

TEST_CASE("open cycle: jump count is Poisson(T)") {
  const TorusGraph g(1, 10);
  const double horizon = 3.0;
  const auto env = frozen(g, true, horizon);
  std::vector<double> counts;
  for (std::uint64_t s = 0; s < 20000; ++s) {
    counts.push_back(static_cast<double>(simulate_walk(env, 0, horizon, s).jumps.size()));
  }
  const auto est = stats::mean_ci(counts, 4.0);
  CHECK(est.ci.lo <= horizon);
  CHECK(horizon <= est.ci.hi);
  CHECK(stats::variance(counts) == doctest::Approx(horizon).epsilon(0.05));
}

TEST_CASE("walk paths are legal") {
  const TorusGraph g(2, 5);
  const auto env = sample_env(g, {0.5, 0.5, 20.0}, EnvInit::stationary(), 8);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto path = simulate_walk(env, 0, 20.0, s);
    CHECK(path_is_legal(env, path));
  }
  CHECK_THROWS_AS(simulate_walk(env, 0, 21.0, 1), HorizonError);
}

TEST_CASE("exact law basics") {
  const TorusGraph g(1, 4);
  const auto env = frozen(g, true, 200.0);
  const auto start = exact_quenched_distribution(env, 2, 0.0);
  CHECK(start(2) == 1.0);
  const auto late = exact_quenched_distribution(env, 2, 200.0);
  for (Eigen::Index y = 0; y < 4; ++y) CHECK(std::abs(late(y) - 0.25) < 1e-8);
}

TEST_CASE("exact law matches piecewise matrix exponentials") {
  const TorusGraph g(1, 5);
  // Single flip of edge 2 at t = 0.7.
  std::vector<dynenv::EdgeTrajectory> edges(5, dynenv::EdgeTrajectory(true, {}));
  edges[2] = dynenv::EdgeTrajectory(true, {0.7});
  const EnvTrajectory env(g, {0.5, 0.5, 2.0}, dynenv::InitKind::AllOpen, 0, edges);
  const auto oracle = oracle_kernel(env, 0.0, 2.0);
  const auto k1 = window_kernel(env, 0.0, 0.7).matrix;
  const auto k2 = window_kernel(env, 0.7, 2.0).matrix;
  for (Vertex x = 0; x < 5; ++x) {
    const auto law = exact_quenched_distribution(env, x, 2.0);
    CHECK((law.transpose() - oracle.row(x)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((law.transpose() - (k1 * k2).row(x)).cwiseAbs().maxCoeff() < 1e-10);
  }

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TorusGraph g2(2, 3);
    const auto env2 = sample_env(g2, {0.5, 0.5, 6.0}, EnvInit::stationary(), seed);
    const auto o = oracle_kernel(env2, 1.0, 6.0);
    const auto w = window_kernel(env2, 1.0, 6.0).matrix;
    CHECK((o - w).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("window kernel invariants") {
  const TorusGraph g(2, 4);
  const auto closed = frozen(g, false, 2.0);
  CHECK((window_kernel(closed, 0.0, 2.0).matrix - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() <
        1e-14);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto env = sample_env(g, {0.5, 0.5, 3.0}, EnvInit::stationary(), seed);
    const auto k = window_kernel(env, 1.0, 2.0);
    CHECK(k.max_row_sum_error() < 1e-10);
    CHECK(k.max_column_sum_error() < 1e-10);
    CHECK(k.min_diagonal() >= std::exp(-1.0) - 1e-12);
    const auto zero = window_kernel(env, 1.5, 1.5);
    CHECK((zero.matrix - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-15);
    const auto lazy = window_kernel(env, 1.0, 2.0, Laziness::HalfLazy);
    CHECK((lazy.matrix - 0.5 * (k.matrix + Eigen::MatrixXd::Identity(16, 16))).cwiseAbs().maxCoeff() < 1e-15);
    const auto from0 = window_kernel(env, 0.0, 2.0);
    for (Vertex x : {0u, 7u}) {
      const auto law = exact_quenched_distribution(env, x, 2.0);
      CHECK((law.transpose() - from0.matrix.row(x)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("block chains") {
  const TorusGraph g(1, 8);
  const auto env = sample_env(g, {0.5, 0.5, 8.0}, EnvInit::stationary(), 3);
  const auto unit = block_chain(env, 1.0);
  REQUIRE(unit.kernels.size() == 8);
  CHECK_FALSE(unit.truncated);
  Eigen::RowVectorXd row = point_mass(8, 0).transpose();
  double last_tv = 1.0;
  for (const auto& k : unit.kernels) {
    row = row * k.matrix;
    const double tv = dist::tv(row.transpose(), dist::uniform(8));
    CHECK(tv <= last_tv + 1e-12);
    last_tv = tv;
  }
  CHECK((row.transpose() - exact_quenched_distribution(env, 0, 8.0)).cwiseAbs().maxCoeff() < 1e-9);

  // mu = 1/2: a 1/mu block equals two unit blocks composed.
  const auto coarse = block_chain(env, 2.0);
  REQUIRE(coarse.kernels.size() == 4);
  for (std::size_t j = 0; j < 4; ++j) {
    const Eigen::MatrixXd composed = unit.kernels[2 * j].matrix * unit.kernels[2 * j + 1].matrix;
    CHECK((coarse.kernels[j].matrix - composed).cwiseAbs().maxCoeff() < 1e-9);
  }

  const auto still = block_chain(frozen(g, true, 3.5), 1.0);
  CHECK(still.truncated);
  REQUIRE(still.kernels.size() == 3);
  CHECK((still.kernels[0].matrix - still.kernels[2].matrix).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("state budget") {
  const TorusGraph g(1, 64);
  const auto env = frozen(g, true, 1.0);
  CHECK_THROWS_AS(exact_quenched_distribution(env, 0, 1.0, 32), CapabilityError);
  CHECK_THROWS_AS(window_kernel(env, 0.0, 1.0, Laziness::Plain, 32), CapabilityError);
}

TEST_CASE("Monte Carlo matches the exact law") {
  const TorusGraph g(1, 8);
  const auto env = sample_env(g, {0.5, 0.5, 5.0}, EnvInit::stationary(), 77);
  const auto exact = exact_quenched_distribution(env, 0, 5.0);
  const std::size_t reps = 100000;
  std::vector<double> counts(8, 0.0);
  for (std::size_t r = 0; r < reps; ++r) counts[position_after(env, 0, 0.0, 5.0, r)] += 1.0;
  for (Vertex y = 0; y < 8; ++y) {
    const double q = exact(y);
    const double sd = std::sqrt(q * (1.0 - q) / reps);
    CHECK(std::abs(counts[y] / reps - q) <= 4.0 * sd + 1e-12);
  }
}

TEST_CASE("Monte Carlo goodness of fit over 20 scenarios") {
  double statistic = 0.0;
  double dof = 0.0;
  for (std::uint64_t scenario = 0; scenario < 20; ++scenario) {
    const TorusGraph g(scenario % 2 == 0 ? 1 : 2, scenario % 2 == 0 ? 6 : 3);
    const auto env = sample_env(g, {0.3 + 0.02 * scenario, 0.25, 4.0}, EnvInit::stationary(), 1000 + scenario);
    const auto exact = exact_quenched_distribution(env, 0, 4.0);
    const std::size_t reps = 5000;
    std::vector<double> counts(g.vertex_count(), 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
      counts[position_after(env, 0, 0.0, 4.0, derive_seed(scenario, r))] += 1.0;
    }
    for (Vertex y = 0; y < g.vertex_count(); ++y) {
      const double expected = exact(y) * reps;
      if (expected < 1e-9) {
        CHECK(counts[y] == 0.0);
        continue;
      }
      statistic += (counts[y] - expected) * (counts[y] - expected) / expected;
      dof += 1.0;
    }
    dof -= 1.0;
  }
  CHECK(stats::chi_square_sf(statistic, dof) > 1e-3);
}
