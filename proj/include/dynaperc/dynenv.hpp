#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dynaperc/stats.hpp"
#include "dynaperc/torus.hpp"

namespace dynaperc::dynenv {

using torus::EdgeId;
using torus::TorusGraph;
using torus::Vertex;

/// Dynamical percolation parameters. Edges open at rate p*mu and close at
/// rate (1-p)*mu. mu = 0 is accepted and means a frozen environment.
struct DynParams {
  double p = 0.5;
  double mu = 0.5;
  double horizon = 1.0;

  void validate() const;
  double open_rate() const { return p * mu; }
  double close_rate() const { return (1.0 - p) * mu; }
};

enum class InitKind : std::uint8_t { Stationary = 0, AllClosed = 1, AllOpen = 2, Explicit = 3 };

std::string to_string(InitKind kind);
InitKind parse_init_kind(const std::string& text);

struct EnvInit {
  InitKind kind = InitKind::Stationary;
  std::vector<std::uint8_t> states;  // only for Explicit

  static EnvInit stationary() { return {InitKind::Stationary, {}}; }
  static EnvInit all_closed() { return {InitKind::AllClosed, {}}; }
  static EnvInit all_open() { return {InitKind::AllOpen, {}}; }
  static EnvInit explicit_states(std::vector<std::uint8_t> s) { return {InitKind::Explicit, std::move(s)}; }
};

/// One edge's right-continuous 0/1 path: the state after a flip time is the new state.
class EdgeTrajectory {
 public:
  EdgeTrajectory() = default;
  EdgeTrajectory(bool initial, std::vector<double> flips);

  bool initial() const { return initial_; }
  const std::vector<double>& flips() const { return flips_; }
  bool state_at(double t) const;
  /// Open at every instant of [a, b].
  bool open_throughout(double a, double b) const;
  bool closed_throughout(double a, double b) const;
  std::size_t flips_in(double a, double b) const;  // flips in (a, b]

  bool operator==(const EdgeTrajectory&) const = default;

 private:
  bool initial_ = false;
  std::vector<double> flips_;
};

struct FlipEvent {
  double time;
  EdgeId edge;
};

/// A fully materialized environment on [0, horizon]. Immutable once built.
class EnvTrajectory {
 public:
  EnvTrajectory(TorusGraph graph, DynParams params, InitKind init, std::uint64_t seed,
                std::vector<EdgeTrajectory> edges);

  const TorusGraph& graph() const { return graph_; }
  const DynParams& params() const { return params_; }
  double horizon() const { return params_.horizon; }
  InitKind init_kind() const { return init_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<EdgeTrajectory>& edges() const { return edges_; }
  const EdgeTrajectory& edge(EdgeId e) const { return edges_.at(e); }

  /// All flips ordered by (time, edge id).
  const std::vector<FlipEvent>& events() const { return events_; }

  /// Throws HorizonError when t lies outside [0, horizon].
  bool state_at(EdgeId e, double t) const;
  std::vector<std::uint8_t> configuration_at(double t) const;
  void check_time(double t) const;

  bool operator==(const EnvTrajectory& other) const;

 private:
  TorusGraph graph_;
  DynParams params_;
  InitKind init_;
  std::uint64_t seed_;
  std::vector<EdgeTrajectory> edges_;
  std::vector<FlipEvent> events_;
};

/// Flip-based exact sampler: exponential holding times with rate p*mu in
/// state 0 and (1-p)*mu in state 1. Each edge uses its own stream derived
/// from (seed, edge id).
EnvTrajectory sample_env(const TorusGraph& g, const DynParams& params, const EnvInit& init,
                         std::uint64_t seed);

/// Refresh-based sampler (rate-mu clocks redrawing Bernoulli(p)); same law as
/// sample_env, different event stream. Used for cross-checks.
EnvTrajectory sample_env_refresh(const TorusGraph& g, const DynParams& params, const EnvInit& init,
                                 std::uint64_t seed);

/// Two-state transition probability P(state `to` at t | state `from` at 0).
double edge_transition_prob(double p, double mu, double t, int from, int to);

/// #{e in edges : e open on all of [a, b]}.
std::size_t count_open_throughout(const EnvTrajectory& env, const std::vector<EdgeId>& edges,
                                  double a, double b);

/// Probability that a single edge is open throughout [a, b] given its state at 0.
double open_throughout_prob(double p, double mu, int from, double a, double b);

/// As above but with a Bernoulli(p) initial state.
double open_throughout_prob_stationary(double p, double mu, double a, double b);

struct BinomialLemmaReport {
  std::size_t trials = 0;
  std::size_t successes = 0;
  double threshold = 0.0;         // |A| * sigma * mu
  stats::Estimate probability;    // Monte Carlo P(count >= threshold), Wilson CI
  double per_edge_worst_case = 0; // q from the all-closed start
  double analytic_worst_case = 0; // P(Bin(|A|, q) >= threshold)
  bool lemma_inequality = false;  // analytic_worst_case >= sigma * mu
};

/// Monte Carlo and worst-case analytic check of "count of open-throughout
/// edges in A is at least |A| sigma mu with probability at least sigma mu".
BinomialLemmaReport binomial_lemma_check(const TorusGraph& g, const DynParams& params,
                                         const std::vector<EdgeId>& edges, double sigma,
                                         double a, double b, std::size_t trials,
                                         const EnvInit& init, std::uint64_t seed);

/// Largest sigma on the grid {k/grid_size} for which the worst-case Binomial
/// tail satisfies the inequality; 0 when none does.
double largest_valid_sigma(std::size_t edge_count, double p, double mu, double a, double b,
                           std::size_t grid_size = 1000);

struct IsolatedVertex {
  bool exists = false;
  std::optional<Vertex> witness;
};

/// Some vertex whose 2d incident edges are all closed throughout [0, length].
IsolatedVertex isolated_vertex_exists(const EnvTrajectory& env, double length);

/// Versioned binary dump. Header: magic "DYNPERC1", u32 version, u32 d,
/// u32 n, f64 p, f64 mu, f64 T, u8 init tag, u64 seed; then per edge:
/// u8 initial bit, u64 flip count, f64 flip times. Little-endian.
void save_trajectory(const EnvTrajectory& env, std::ostream& out);
EnvTrajectory load_trajectory(std::istream& in);

}  // namespace dynaperc::dynenv
