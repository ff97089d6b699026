#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dynaperc/dynenv.hpp"

namespace dynaperc::walk {

using dynenv::EnvTrajectory;
using torus::Vertex;
using torus::VertexSet;

inline constexpr std::size_t kDefaultStateBudget = 4096;

struct Jump {
  double time;
  Vertex to;
};

/// A realized quenched path. Positions are right-continuous in time.
struct WalkPath {
  Vertex start = 0;
  double horizon = 0.0;
  std::vector<Jump> jumps;
  std::vector<double> query_times;
  std::vector<Vertex> positions;  // one per query time

  Vertex position_at(double t) const;
};

/// Rate-1 attempt clock; each attempt picks one of 2d directions uniformly
/// and moves iff that edge is open at the attempt instant.
WalkPath simulate_walk(const EnvTrajectory& env, Vertex x0, double horizon, std::uint64_t walk_seed,
                       std::span<const double> query_times = {});

/// Position at t1 of a walk started from x0 at time t0.
Vertex position_after(const EnvTrajectory& env, Vertex x0, double t0, double t1, std::uint64_t walk_seed);

/// First time the walk is in `target`, or +inf if it is not reached by the horizon.
double first_hitting_time(const EnvTrajectory& env, Vertex x0, const VertexSet& target,
                          double horizon, std::uint64_t walk_seed);

/// Replays a path against its environment: adjacency, increasing times, and an
/// open edge at every jump time.
bool path_is_legal(const EnvTrajectory& env, const WalkPath& path);

/// Per-vertex laws stored as columns; rows are torus vertices.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EvolutionStats {
  double truncation_error = 0.0;  // total Poisson tail mass dropped (bounds the TV error)
  std::size_t intervals = 0;
};

struct EvolveOptions {
  double tolerance = 1e-10;               // certified total truncation budget per call
  const VertexSet* absorbing = nullptr;   // kill mass on entering this set
  std::vector<double>* occupation = nullptr;  // per column: integral of surviving mass dt
  std::size_t state_budget = kDefaultStateBudget;
};

using Observer = std::function<void(double time, const Batch& batch)>;

/// Evolves each column of `batch` through the piecewise-constant jump
/// generator of `env` on [t0, t1] by uniformization. `observe` is called at
/// every time in `observe_at` (ascending, inside [t0, t1]).
EvolutionStats evolve(const EnvTrajectory& env, Batch& batch, double t0, double t1,
                      std::span<const double> observe_at = {}, const Observer& observe = {},
                      const EvolveOptions& options = {});

/// Exact quenched law of X_t from x0.
Eigen::VectorXd exact_quenched_distribution(const EnvTrajectory& env, Vertex x0, double t,
                                            std::size_t state_budget = kDefaultStateBudget);

enum class Laziness { Plain, HalfLazy };

/// Row-stochastic matrix: entry (x, y) = P(X_b = y | X_a = x) in the fixed environment.
struct WalkKernel {
  double window_start = 0.0;
  double window_end = 0.0;
  Laziness laziness = Laziness::Plain;
  Eigen::MatrixXd matrix;

  double max_row_sum_error() const;
  double max_column_sum_error() const;
  double min_diagonal() const;
  void write_text(std::ostream& out) const;  // dense row-major, for debugging
};

WalkKernel window_kernel(const EnvTrajectory& env, double a, double b, Laziness laziness = Laziness::Plain,
                         std::size_t state_budget = kDefaultStateBudget);

struct BlockChain {
  double block_length = 1.0;
  std::vector<WalkKernel> kernels;
  bool truncated = false;  // horizon was not a multiple of the block length
};

/// Kernels of the consecutive windows [(k-1)L, kL] for k = 1..floor(T/L).
BlockChain block_chain(const EnvTrajectory& env, double block_length, Laziness laziness = Laziness::Plain,
                       std::size_t state_budget = kDefaultStateBudget);

/// Point mass at x over the torus vertices.
Eigen::VectorXd point_mass(std::size_t states, Vertex x);

}  // namespace dynaperc::walk
