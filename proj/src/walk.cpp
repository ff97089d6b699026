#include "dynaperc/walk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "dynaperc/error.hpp"
#include "dynaperc/rng.hpp"

namespace dynaperc::walk {

using dynenv::FlipEvent;
using torus::EdgeId;
using torus::TorusGraph;

Vertex WalkPath::position_at(double t) const {
  Vertex pos = start;
  for (const auto& j : jumps) {
    if (j.time > t) break;
    pos = j.to;
  }
  return pos;
}

WalkPath simulate_walk(const EnvTrajectory& env, Vertex x0, double horizon, std::uint64_t walk_seed,
                       std::span<const double> query_times) {
  const auto& g = env.graph();
  if (x0 >= g.vertex_count()) throw InputError("start vertex out of range");
  env.check_time(horizon);
  for (double q : query_times) {
    if (q < 0.0 || q > horizon) throw HorizonError("query time outside walk horizon");
  }
  WalkPath path;
  path.start = x0;
  path.horizon = horizon;
  Rng rng(walk_seed);
  Vertex pos = x0;
  double t = 0.0;
  for (;;) {
    t += rng.exponential(1.0);
    if (t > horizon) break;
    const auto direction = static_cast<unsigned>(rng.below(g.degree()));
    const auto nb = g.neighbor(pos, direction);
    if (env.edge(nb.edge).state_at(t)) {
      pos = nb.vertex;
      path.jumps.push_back({t, pos});
    }
  }
  path.query_times.assign(query_times.begin(), query_times.end());
  path.positions.reserve(query_times.size());
  for (double q : query_times) path.positions.push_back(path.position_at(q));
  return path;
}

Vertex position_after(const EnvTrajectory& env, Vertex x0, double t0, double t1, std::uint64_t walk_seed) {
  const auto& g = env.graph();
  if (x0 >= g.vertex_count()) throw InputError("start vertex out of range");
  env.check_time(t0);
  env.check_time(t1);
  Rng rng(walk_seed);
  Vertex pos = x0;
  double t = t0;
  for (;;) {
    t += rng.exponential(1.0);
    if (t > t1) return pos;
    const auto nb = g.neighbor(pos, static_cast<unsigned>(rng.below(g.degree())));
    if (env.edge(nb.edge).state_at(t)) pos = nb.vertex;
  }
}

double first_hitting_time(const EnvTrajectory& env, Vertex x0, const VertexSet& target,
                          double horizon, std::uint64_t walk_seed) {
  const auto& g = env.graph();
  if (x0 >= g.vertex_count()) throw InputError("start vertex out of range");
  env.check_time(horizon);
  if (target.contains(x0)) return 0.0;
  Rng rng(walk_seed);
  Vertex pos = x0;
  double t = 0.0;
  for (;;) {
    t += rng.exponential(1.0);
    if (t > horizon) return std::numeric_limits<double>::infinity();
    const auto nb = g.neighbor(pos, static_cast<unsigned>(rng.below(g.degree())));
    if (env.edge(nb.edge).state_at(t)) {
      pos = nb.vertex;
      if (target.contains(pos)) return t;
    }
  }
}

bool path_is_legal(const EnvTrajectory& env, const WalkPath& path) {
  const auto& g = env.graph();
  Vertex pos = path.start;
  double last = 0.0;
  for (const auto& j : path.jumps) {
    if (!(j.time > last) || j.time > path.horizon) return false;
    bool crossed = false;
    for (const auto& nb : g.neighbors(pos)) {
      if (nb.vertex == j.to && env.edge(nb.edge).state_at(j.time)) crossed = true;
    }
    if (!crossed) return false;
    pos = j.to;
    last = j.time;
  }
  return true;
}

namespace {

constexpr double kMaxChunk = 16.0;

// Uniformized one-step matrix P = I + G for the walk generator G of the
// current edge configuration (uniformization rate 1).
class Stepper {
 public:
  Stepper(const TorusGraph& g, std::vector<std::uint8_t> open, const VertexSet* absorbing)
      : degree_(g.degree()), states_(g.vertex_count()), weight_(1.0 / g.degree()),
        neighbor_(states_ * degree_), edge_(states_ * degree_), open_(std::move(open)),
        stay_(states_, 1.0), killed_(states_, 0) {
    for (Vertex v = 0; v < states_; ++v) {
      for (unsigned k = 0; k < degree_; ++k) {
        const auto nb = g.neighbor(v, k);
        neighbor_[v * degree_ + k] = nb.vertex;
        edge_[v * degree_ + k] = nb.edge;
        if (open_[nb.edge]) stay_[v] -= weight_;
      }
      if (absorbing != nullptr && absorbing->contains(v)) killed_[v] = 1;
    }
    ends_.resize(open_.size());
    for (EdgeId e = 0; e < open_.size(); ++e) {
      const auto ends = g.edge_ends(e);
      ends_[e] = {ends.lo, ends.hi};
    }
  }

  void toggle(EdgeId e) {
    open_[e] ^= 1;
    const double delta = open_[e] ? -weight_ : weight_;
    stay_[ends_[e].first] += delta;
    stay_[ends_[e].second] += delta;
  }

  void kill(Batch& b) const {
    for (std::size_t y = 0; y < states_; ++y) {
      if (killed_[y]) b.row(static_cast<Eigen::Index>(y)).setZero();
    }
  }

  // out = P^T-action on column measures: out(y) = stay(y) in(y) + w sum_{open z~y} in(z).
  void apply(const Batch& in, Batch& out) const {
    const auto cols = static_cast<std::size_t>(in.cols());
    const double* src = in.data();
    double* dst = out.data();
    for (std::size_t y = 0; y < states_; ++y) {
      double* row = dst + y * cols;
      if (killed_[y]) {
        std::fill(row, row + cols, 0.0);
        continue;
      }
      const double s = stay_[y];
      const double* self = src + y * cols;
      for (std::size_t c = 0; c < cols; ++c) row[c] = s * self[c];
      for (unsigned k = 0; k < degree_; ++k) {
        if (!open_[edge_[y * degree_ + k]]) continue;
        const double* other = src + static_cast<std::size_t>(neighbor_[y * degree_ + k]) * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += weight_ * other[c];
      }
    }
  }

 private:
  unsigned degree_;
  std::size_t states_;
  double weight_;
  std::vector<Vertex> neighbor_;
  std::vector<EdgeId> edge_;
  std::vector<std::uint8_t> open_;
  std::vector<std::pair<Vertex, Vertex>> ends_;
  std::vector<double> stay_;
  std::vector<std::uint8_t> killed_;
};

struct PoissonWeights {
  std::vector<double> weight;  // P(N = k), k = 0..K
  std::vector<double> tail;    // P(N > k)
  double dropped = 0.0;        // P(N > K)
};

// Smallest K with P(N > K) <= tol for N ~ Poisson(lambda); tails are summed
// backwards so tiny tolerances stay accurate.
PoissonWeights poisson_weights(double lambda, double tol) {
  std::vector<double> w;
  w.push_back(std::exp(-lambda));
  for (std::size_t k = 1;; ++k) {
    const double next = w.back() * lambda / static_cast<double>(k);
    w.push_back(next);
    if (static_cast<double>(k) > lambda && next < 1e-300) break;
    if (static_cast<double>(k) > lambda && next < tol * 1e-6) break;
  }
  std::vector<double> tail(w.size(), 0.0);
  for (std::size_t k = w.size() - 1; k-- > 0;) tail[k] = tail[k + 1] + w[k + 1];
  std::size_t cut = 0;
  while (cut + 1 < w.size() && tail[cut] > tol) ++cut;
  PoissonWeights out;
  out.weight.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(cut) + 1);
  out.tail.assign(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(cut) + 1);
  out.dropped = tail[cut];
  // Renormalize so that stochastic steps stay stochastic; the L1 change is
  // at most 2 * dropped, i.e. TV error at most dropped.
  double kept = 0.0;
  for (double x : out.weight) kept += x;
  for (double& x : out.weight) x /= kept;
  return out;
}

void check_budget(const TorusGraph& g, std::size_t budget) {
  if (g.vertex_count() > budget) {
    throw CapabilityError("exact evolution needs n^d <= " + std::to_string(budget) + " states (have " +
                          std::to_string(g.vertex_count()) + "); use Monte Carlo mode");
  }
}

}  // namespace

EvolutionStats evolve(const EnvTrajectory& env, Batch& batch, double t0, double t1,
                      std::span<const double> observe_at, const Observer& observe,
                      const EvolveOptions& options) {
  const auto& g = env.graph();
  check_budget(g, options.state_budget);
  if (static_cast<std::size_t>(batch.rows()) != g.vertex_count()) throw InputError("batch rows must equal n^d");
  if (t1 < t0) throw InputError("evolution interval must satisfy t0 <= t1");
  env.check_time(t0);
  env.check_time(t1);
  for (std::size_t i = 0; i < observe_at.size(); ++i) {
    if (observe_at[i] < t0 || observe_at[i] > t1 || (i > 0 && observe_at[i] < observe_at[i - 1])) {
      throw InputError("observation times must be ascending inside the evolution interval");
    }
  }
  if (options.occupation != nullptr) options.occupation->assign(static_cast<std::size_t>(batch.cols()), 0.0);

  Stepper stepper(g, env.configuration_at(t0), options.absorbing);
  if (options.absorbing != nullptr) stepper.kill(batch);

  const auto& events = env.events();
  auto event_it = std::upper_bound(events.begin(), events.end(), t0,
                                   [](double t, const FlipEvent& e) { return t < e.time; });
  const auto event_end = std::upper_bound(events.begin(), events.end(), t1,
                                          [](double t, const FlipEvent& e) { return t < e.time; });

  const double span = t1 - t0;
  const double interval_estimate = static_cast<double>(event_end - event_it) +
                                   static_cast<double>(observe_at.size()) + std::ceil(span / kMaxChunk) + 1.0;

  EvolutionStats stats;
  Batch term(batch.rows(), batch.cols());
  Batch next(batch.rows(), batch.cols());
  Batch acc(batch.rows(), batch.cols());

  auto advance = [&](double tau) {
    const double share = span > 0.0 ? 0.5 * tau / span : 0.0;
    const double tol = options.tolerance * (share + 0.5 / interval_estimate);
    const auto pw = poisson_weights(tau, tol);
    term = batch;
    acc = pw.weight[0] * term;
    std::vector<double>* occ = options.occupation;
    auto add_occupation = [&](std::size_t k) {
      for (Eigen::Index c = 0; c < term.cols(); ++c) {
        (*occ)[static_cast<std::size_t>(c)] += pw.tail[k] * term.col(c).sum();
      }
    };
    if (occ != nullptr) add_occupation(0);
    for (std::size_t k = 1; k < pw.weight.size(); ++k) {
      stepper.apply(term, next);
      term.swap(next);
      acc += pw.weight[k] * term;
      if (occ != nullptr) add_occupation(k);
    }
    batch.swap(acc);
    stats.truncation_error += pw.dropped;
    ++stats.intervals;
  };

  std::size_t obs = 0;
  while (obs < observe_at.size() && observe_at[obs] <= t0) {
    if (observe) observe(observe_at[obs], batch);
    ++obs;
  }
  double now = t0;
  while (now < t1) {
    double stop = t1;
    if (event_it != event_end) stop = std::min(stop, event_it->time);
    if (obs < observe_at.size()) stop = std::min(stop, observe_at[obs]);
    while (now < stop) {
      const double tau = std::min(kMaxChunk, stop - now);
      advance(tau);
      now = (stop - now <= kMaxChunk) ? stop : now + tau;
    }
    while (event_it != event_end && event_it->time <= now) {
      stepper.toggle(event_it->edge);
      ++event_it;
    }
    while (obs < observe_at.size() && observe_at[obs] <= now) {
      if (observe) observe(observe_at[obs], batch);
      ++obs;
    }
  }
  return stats;
}

Eigen::VectorXd point_mass(std::size_t states, Vertex x) {
  if (x >= states) throw InputError("point mass vertex out of range");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states));
  v(x) = 1.0;
  return v;
}

Eigen::VectorXd exact_quenched_distribution(const EnvTrajectory& env, Vertex x0, double t,
                                            std::size_t state_budget) {
  const auto states = env.graph().vertex_count();
  check_budget(env.graph(), state_budget);
  Batch b = point_mass(states, x0);
  EvolveOptions opt;
  opt.state_budget = state_budget;
  evolve(env, b, 0.0, t, {}, {}, opt);
  return b.col(0);
}

double WalkKernel::max_row_sum_error() const {
  return (matrix.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

double WalkKernel::max_column_sum_error() const {
  return (matrix.colwise().sum().array() - 1.0).abs().maxCoeff();
}

double WalkKernel::min_diagonal() const { return matrix.diagonal().minCoeff(); }

void WalkKernel::write_text(std::ostream& out) const {
  const auto prec = out.precision(17);
  out << matrix.rows() << ' ' << matrix.cols() << '\n';
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) out << (j ? " " : "") << matrix(i, j);
    out << '\n';
  }
  out.precision(prec);
}

WalkKernel window_kernel(const EnvTrajectory& env, double a, double b, Laziness laziness,
                         std::size_t state_budget) {
  check_budget(env.graph(), state_budget);
  const auto states = static_cast<Eigen::Index>(env.graph().vertex_count());
  Batch batch = Batch::Identity(states, states);
  EvolveOptions opt;
  opt.state_budget = state_budget;
  evolve(env, batch, a, b, {}, {}, opt);
  WalkKernel k;
  k.window_start = a;
  k.window_end = b;
  k.laziness = laziness;
  k.matrix = batch.transpose();
  if (laziness == Laziness::HalfLazy) {
    k.matrix = 0.5 * (k.matrix + Eigen::MatrixXd::Identity(states, states));
  }
  return k;
}

BlockChain block_chain(const EnvTrajectory& env, double block_length, Laziness laziness,
                       std::size_t state_budget) {
  if (!(block_length > 0.0)) throw InputError("block length must be positive");
  check_budget(env.graph(), state_budget);
  BlockChain chain;
  chain.block_length = block_length;
  const double ratio = env.horizon() / block_length;
  // Tolerate representation error in T / L before declaring truncation.
  auto blocks = static_cast<std::size_t>(std::floor(ratio + 1e-9));
  chain.truncated = std::abs(ratio - static_cast<double>(blocks)) > 1e-9;
  for (std::size_t k = 1; k <= blocks; ++k) {
    const double a = static_cast<double>(k - 1) * block_length;
    const double b = std::min(static_cast<double>(k) * block_length, env.horizon());
    chain.kernels.push_back(window_kernel(env, a, b, laziness, state_budget));
  }
  return chain;
}

}  // namespace dynaperc::walk
