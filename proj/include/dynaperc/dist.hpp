#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dynaperc/dynenv.hpp"
#include "dynaperc/stats.hpp"
#include "dynaperc/walk.hpp"

namespace dynaperc::dist {

using dynenv::DynParams;
using dynenv::EnvInit;
using dynenv::EnvTrajectory;
using torus::TorusGraph;
using torus::Vertex;
using torus::VertexSet;

/// Probability vector over a finite state space.
using Dist = Eigen::VectorXd;

Dist uniform(std::size_t states);
/// Throws InputError unless nonnegative and summing to 1 within tol.
void check_dist(const Dist& d, double tol = 1e-10);

double tv(const Dist& a, const Dist& b);
/// sqrt(sum_y b(y) (a(y)/b(y) - 1)^2). DomainError if b(y) = 0 < a(y).
double chi(const Dist& a, const Dist& b);

/// "Not mixed by the horizon" marker.
inline constexpr double kNotMixed = std::numeric_limits<double>::infinity();
inline bool mixed(double t) { return t != kNotMixed; }

enum class Mode { Exact, MonteCarlo };
std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct Grid {
  double step = 1.0;
  double horizon = 0.0;
  std::vector<double> times() const;  // 0, step, 2 step, ... <= horizon
};

struct TvCurve {
  std::vector<double> times;
  std::vector<double> tv;
  std::vector<double> bias_bound;  // Monte Carlo only: plug-in TV bias bound subtracted
  double truncation_error = 0.0;
  bool monotone = true;            // nonincreasing within 1e-9
};

struct McOptions {
  std::size_t replicas = 10000;
  std::uint64_t walk_seed = 1;
};

/// TV(law of X_t from x, uniform) along the grid. Exact mode evolves the
/// law; Monte Carlo mode uses empirical laws minus the plug-in bias bound.
TvCurve quenched_tv_curve(const EnvTrajectory& env, Vertex x, const Grid& grid, Mode mode,
                          const McOptions& mc = {});

/// Worst start: max_x TV(law of X_t from x, uniform) along the grid (exact only).
TvCurve worst_tv_curve(const EnvTrajectory& env, const Grid& grid);

/// First grid time with TV <= eps, or kNotMixed.
double first_below(const TvCurve& curve, double eps);

/// t_mix(eps, x, eta) on the grid.
double quenched_mixing_time(const EnvTrajectory& env, Vertex x, double eps, const Grid& grid,
                            Mode mode = Mode::Exact, const McOptions& mc = {});

/// t_mix(eps, eta) = max_x t_mix(eps, x, eta) on the grid.
double quenched_mixing_time_worst(const EnvTrajectory& env, double eps, const Grid& grid);

struct EnvSampling {
  EnvInit init = EnvInit::stationary();
  std::size_t samples = 30;
  std::uint64_t seed = 1;
};

struct TailReport {
  stats::Estimate fraction;  // P(t_mix(eps, x, eta) >= threshold), Wilson CI
  std::size_t exceed = 0;
  std::size_t samples = 0;
  std::vector<double> mixing_times;  // per environment; kNotMixed when censored
};

/// Fraction of sampled environments whose quenched mixing time from x is >= threshold.
TailReport quenched_tail(const TorusGraph& g, const DynParams& params, Vertex x, double eps,
                         double threshold, double grid_step, const EnvSampling& envs);

struct AnnealedReport {
  TvCurve annealed;                    // TV(eta-averaged law, uniform)
  std::vector<double> mean_quenched;   // average of per-environment TVs, same grid
  double mixing_time = kNotMixed;
  stats::Interval ci;                  // mixing-time interval from the pointwise TV band
  Mode mode = Mode::Exact;
};

AnnealedReport annealed_mixing_time(const TorusGraph& g, const DynParams& params, Vertex x, double eps,
                                    double grid_step, const EnvSampling& envs, Mode mode,
                                    const McOptions& mc = {});

struct HittingEstimate {
  double mean = 0.0;
  stats::Interval ci;
  double censored_fraction = 0.0;
  bool usable = true;
  std::string method;
};

/// Monte Carlo E[tau_A] from x in a fixed environment; censored replicas
/// contribute the horizon (so the mean is a lower bound when censoring occurs).
HittingEstimate quenched_hitting_mc(const EnvTrajectory& env, Vertex x, const VertexSet& target,
                                    std::size_t replicas, std::uint64_t walk_seed);

struct ExactHitting {
  std::vector<double> truncated_mean;  // E[min(tau_A, T)] per start vertex
  std::vector<double> survival;        // P(tau_A > T) per start vertex
  double truncation_error = 0.0;
};

/// Exact E[min(tau_A, T)] for every start via killed uniformization.
ExactHitting quenched_hitting_exact(const EnvTrajectory& env, const VertexSet& target);

struct AnnealedHitting {
  std::vector<double> mean;            // per start, averaged over environments
  std::vector<double> standard_error;  // per start
  double max_mean = 0.0;
  Vertex argmax = 0;
  double max_censored_fraction = 0.0;  // worst P(tau_A > T) over starts and environments
};

AnnealedHitting annealed_hitting_exact(const TorusGraph& g, const DynParams& params,
                                       const VertexSet& target, const EnvSampling& envs);

struct LowerBoundReport {
  double beta = 0.0;
  double time = 0.0;                 // beta n^2 / mu
  std::vector<double> tvs;           // per environment (empty when not computed)
  stats::Estimate mean_tv;
  std::size_t near_one = 0;          // environments with TV > 1 - eps
  stats::Estimate near_one_fraction;
  std::size_t isolated = 0;
  stats::Estimate isolated_fraction; // isolated vertex over [0, beta / mu]
};

struct LowerBoundOptions {
  bool compute_tv = true;
  bool compute_isolation = true;
  Vertex start = 0;
};

LowerBoundReport quenched_lower_bound_experiment(const TorusGraph& g, const DynParams& params, double beta,
                                                 double eps, const EnvSampling& envs,
                                                 const LowerBoundOptions& options = {});

/// One result row. Columns follow the versioned results schema.
struct Record {
  std::string config_hash;
  std::string cell_id;
  std::uint64_t seed = 0;
  unsigned d = 0;
  unsigned n = 0;
  double p = 0.0;
  double mu = 0.0;
  double eps = 0.0;
  std::uint64_t env_seed = 0;
  long long x = -1;  // -1: not applicable
  std::string statistic;
  double value = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::string method;
  double censored_frac = 0.0;
};

inline constexpr int kResultsSchemaVersion = 1;

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const Record& r);
void write_jsonl_row(std::ostream& out, const Record& r);

/// Shortest round-trip decimal rendering; "inf" for the not-mixed marker.
std::string format_number(double v);

}  // namespace dynaperc::dist
