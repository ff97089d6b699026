#include "dynaperc/dist.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

#include "dynaperc/error.hpp"
#include "dynaperc/parallel.hpp"
#include "dynaperc/rng.hpp"

namespace dynaperc::dist {

Dist uniform(std::size_t states) {
  return Dist::Constant(static_cast<Eigen::Index>(states), 1.0 / static_cast<double>(states));
}

void check_dist(const Dist& d, double tol) {
  if ((d.array() < -tol).any()) throw InputError("distribution has negative weight");
  if (std::abs(d.sum() - 1.0) > tol) throw InputError("distribution does not sum to 1");
}

double tv(const Dist& a, const Dist& b) {
  if (a.size() != b.size()) throw InputError("tv: support mismatch");
  return 0.5 * (a - b).cwiseAbs().sum();
}

double chi(const Dist& a, const Dist& b) {
  if (a.size() != b.size()) throw InputError("chi: support mismatch");
  double sum = 0.0;
  for (Eigen::Index y = 0; y < a.size(); ++y) {
    if (b(y) <= 0.0) {
      if (a(y) > 0.0) throw DomainError("chi undefined: reference has a zero where the law is positive");
      continue;
    }
    const double r = a(y) / b(y) - 1.0;
    sum += b(y) * r * r;
  }
  return std::sqrt(sum);
}

std::string to_string(Mode mode) { return mode == Mode::Exact ? "exact" : "mc"; }

Mode parse_mode(const std::string& text) {
  if (text == "exact") return Mode::Exact;
  if (text == "mc" || text == "monte-carlo") return Mode::MonteCarlo;
  throw InputError("mode must be 'exact' or 'mc'");
}

std::vector<double> Grid::times() const {
  if (!(step > 0.0)) throw InputError("grid step must be positive");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor(horizon / step + 1e-9));
  out.reserve(count + 1);
  for (std::size_t k = 0; k <= count; ++k) out.push_back(std::min(horizon, static_cast<double>(k) * step));
  return out;
}

namespace {

bool nonincreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1] + 1e-9) return false;
  }
  return true;
}

TvCurve mc_curve(const EnvTrajectory& env, Vertex x, const std::vector<double>& times, const McOptions& mc) {
  if (mc.replicas == 0) throw InputError("Monte Carlo mode needs replicas >= 1");
  const auto states = env.graph().vertex_count();
  const double horizon = times.empty() ? 0.0 : times.back();
  std::vector<std::vector<std::uint32_t>> positions(mc.replicas);
  parallel_for(mc.replicas, [&](std::size_t r) {
    const auto path = walk::simulate_walk(env, x, horizon, derive_seed(mc.walk_seed, r), times);
    positions[r].assign(path.positions.begin(), path.positions.end());
  });
  TvCurve curve;
  curve.times = times;
  const auto m = static_cast<double>(mc.replicas);
  const Dist pi = uniform(states);
  for (std::size_t i = 0; i < times.size(); ++i) {
    Dist emp = Dist::Zero(static_cast<Eigen::Index>(states));
    for (const auto& pos : positions) emp(pos[i]) += 1.0;
    emp /= m;
    double bias = 0.0;
    for (Eigen::Index y = 0; y < emp.size(); ++y) bias += std::sqrt(emp(y) * (1.0 - emp(y)) / m);
    bias *= 0.5;
    curve.bias_bound.push_back(bias);
    curve.tv.push_back(std::max(0.0, tv(emp, pi) - bias));
  }
  curve.monotone = nonincreasing(curve.tv);
  return curve;
}

}  // namespace

TvCurve quenched_tv_curve(const EnvTrajectory& env, Vertex x, const Grid& grid, Mode mode, const McOptions& mc) {
  const auto times = grid.times();
  if (mode == Mode::MonteCarlo) return mc_curve(env, x, times, mc);
  const auto states = env.graph().vertex_count();
  const Dist pi = uniform(states);
  walk::Batch batch = walk::point_mass(states, x);
  TvCurve curve;
  curve.times = times;
  const auto stats = walk::evolve(env, batch, 0.0, grid.horizon, times,
                                  [&](double, const walk::Batch& b) { curve.tv.push_back(tv(b.col(0), pi)); });
  curve.truncation_error = stats.truncation_error;
  curve.monotone = nonincreasing(curve.tv);
  return curve;
}

TvCurve worst_tv_curve(const EnvTrajectory& env, const Grid& grid) {
  const auto times = grid.times();
  const auto states = static_cast<Eigen::Index>(env.graph().vertex_count());
  walk::Batch batch = walk::Batch::Identity(states, states);
  const double u = 1.0 / static_cast<double>(states);
  TvCurve curve;
  curve.times = times;
  const auto stats = walk::evolve(env, batch, 0.0, grid.horizon, times, [&](double, const walk::Batch& b) {
    const Eigen::RowVectorXd dev = 0.5 * (b.array() - u).abs().colwise().sum();
    curve.tv.push_back(dev.maxCoeff());
  });
  curve.truncation_error = stats.truncation_error;
  curve.monotone = nonincreasing(curve.tv);
  return curve;
}

double first_below(const TvCurve& curve, double eps) {
  for (std::size_t i = 0; i < curve.times.size(); ++i) {
    if (curve.tv[i] <= eps) return curve.times[i];
  }
  return kNotMixed;
}

double quenched_mixing_time(const EnvTrajectory& env, Vertex x, double eps, const Grid& grid, Mode mode,
                            const McOptions& mc) {
  if (eps >= 1.0) return 0.0;
  return first_below(quenched_tv_curve(env, x, grid, mode, mc), eps);
}

double quenched_mixing_time_worst(const EnvTrajectory& env, double eps, const Grid& grid) {
  if (eps >= 1.0) return 0.0;
  return first_below(worst_tv_curve(env, grid), eps);
}

TailReport quenched_tail(const TorusGraph& g, const DynParams& params, Vertex x, double eps, double threshold,
                         double grid_step, const EnvSampling& envs) {
  TailReport report;
  report.samples = envs.samples;
  report.mixing_times.assign(envs.samples, kNotMixed);
  if (threshold <= 0.0) {
    report.exceed = envs.samples;
    std::fill(report.mixing_times.begin(), report.mixing_times.end(), 0.0);
  } else {
    DynParams run = params;
    run.horizon = threshold;
    const Grid grid{grid_step, threshold};
    parallel_for(envs.samples, [&](std::size_t i) {
      const auto env = dynenv::sample_env(g, run, envs.init, derive_seed(envs.seed, i));
      report.mixing_times[i] = quenched_mixing_time(env, x, eps, grid);
    });
    for (double t : report.mixing_times) report.exceed += (!mixed(t) || t >= threshold) ? 1 : 0;
  }
  report.fraction.value = envs.samples ? static_cast<double>(report.exceed) / static_cast<double>(envs.samples) : 0.0;
  report.fraction.ci = stats::wilson(report.exceed, envs.samples);
  return report;
}

AnnealedReport annealed_mixing_time(const TorusGraph& g, const DynParams& params, Vertex x, double eps,
                                    double grid_step, const EnvSampling& envs, Mode mode, const McOptions& mc) {
  if (envs.init.kind != dynenv::InitKind::Stationary) {
    throw InputError("annealed mixing time is defined for a stationary environment start");
  }
  if (envs.samples == 0) throw InputError("annealed mixing needs at least one environment sample");
  const Grid grid{grid_step, params.horizon};
  const auto times = grid.times();
  const auto states = static_cast<Eigen::Index>(g.vertex_count());
  const Dist pi = uniform(g.vertex_count());
  AnnealedReport report;
  report.mode = mode;
  report.annealed.times = times;

  // laws[i] holds one row per grid time for environment i.
  std::vector<Eigen::MatrixXd> laws(envs.samples);
  std::vector<double> truncation(envs.samples, 0.0);
  parallel_for(envs.samples, [&](std::size_t i) {
    const auto env = dynenv::sample_env(g, params, envs.init, derive_seed(envs.seed, i));
    Eigen::MatrixXd& rows = laws[i];
    rows.setZero(static_cast<Eigen::Index>(times.size()), states);
    if (mode == Mode::Exact) {
      walk::Batch batch = walk::point_mass(g.vertex_count(), x);
      std::size_t k = 0;
      truncation[i] = walk::evolve(env, batch, 0.0, grid.horizon, times, [&](double, const walk::Batch& b) {
                        rows.row(static_cast<Eigen::Index>(k++)) = b.col(0).transpose();
                      }).truncation_error;
    } else {
      if (mc.replicas == 0) throw InputError("Monte Carlo mode needs replicas >= 1");
      for (std::size_t r = 0; r < mc.replicas; ++r) {
        const auto path = walk::simulate_walk(env, x, grid.horizon,
                                              derive_seed(derive_seed(mc.walk_seed, i), r), times);
        for (std::size_t k = 0; k < times.size(); ++k) rows(static_cast<Eigen::Index>(k), path.positions[k]) += 1.0;
      }
      rows /= static_cast<double>(mc.replicas);
    }
  });

  const auto m = static_cast<double>(envs.samples);
  const double pooled = mode == Mode::Exact ? 0.0 : m * static_cast<double>(mc.replicas);
  std::vector<double> band;
  for (std::size_t k = 0; k < times.size(); ++k) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(states);
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(states);
    std::vector<double> quenched;
    for (std::size_t i = 0; i < envs.samples; ++i) {
      const Eigen::RowVectorXd row = laws[i].row(static_cast<Eigen::Index>(k));
      sum += row;
      sq += row.cwiseProduct(row);
      quenched.push_back(tv(row.transpose(), pi));
    }
    const Eigen::RowVectorXd avg = sum / m;
    double bias = 0.0;
    if (pooled > 0.0) {
      for (Eigen::Index y = 0; y < states; ++y) bias += std::sqrt(avg(y) * (1.0 - avg(y)) / pooled);
      bias *= 0.5;
      report.annealed.bias_bound.push_back(bias);
    }
    report.annealed.tv.push_back(std::max(0.0, tv(avg.transpose(), pi) - bias));
    report.mean_quenched.push_back(stats::mean(quenched));
    double half = 0.0;
    if (envs.samples > 1) {
      const Eigen::RowVectorXd var = ((sq / m) - avg.cwiseProduct(avg)).cwiseMax(0.0) * (m / (m - 1.0));
      half = 0.5 * 3.0 * (var / m).cwiseSqrt().sum();
    }
    band.push_back(half + bias);
  }
  for (double t : truncation) report.annealed.truncation_error = std::max(report.annealed.truncation_error, t);
  report.annealed.monotone = nonincreasing(report.annealed.tv);
  if (eps >= 1.0) {
    report.mixing_time = 0.0;
    report.ci = {0.0, 0.0};
    return report;
  }
  report.mixing_time = first_below(report.annealed, eps);
  report.ci = {kNotMixed, kNotMixed};
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!mixed(report.ci.lo) && report.annealed.tv[k] - band[k] <= eps) report.ci.lo = times[k];
    if (!mixed(report.ci.hi) && report.annealed.tv[k] + band[k] <= eps) report.ci.hi = times[k];
  }
  return report;
}

HittingEstimate quenched_hitting_mc(const EnvTrajectory& env, Vertex x, const VertexSet& target,
                                    std::size_t replicas, std::uint64_t walk_seed) {
  if (target.empty()) throw InputError("hitting target must be nonempty");
  if (replicas == 0) throw InputError("replicas must be >= 1");
  std::vector<double> times(replicas);
  parallel_for(replicas, [&](std::size_t r) {
    times[r] = walk::first_hitting_time(env, x, target, env.horizon(), derive_seed(walk_seed, r));
  });
  std::size_t censored = 0;
  for (auto& t : times) {
    if (!std::isfinite(t)) {
      ++censored;
      t = env.horizon();
    }
  }
  HittingEstimate est;
  const auto e = stats::mean_ci(times);
  est.mean = e.value;
  est.ci = e.ci;
  est.censored_fraction = static_cast<double>(censored) / static_cast<double>(replicas);
  est.usable = censored < replicas;
  est.method = "mc";
  return est;
}

ExactHitting quenched_hitting_exact(const EnvTrajectory& env, const VertexSet& target) {
  if (target.empty()) throw InputError("hitting target must be nonempty");
  const auto states = static_cast<Eigen::Index>(env.graph().vertex_count());
  walk::Batch batch = walk::Batch::Identity(states, states);
  std::vector<double> occupation;
  walk::EvolveOptions opt;
  opt.absorbing = &target;
  opt.occupation = &occupation;
  const auto stats = walk::evolve(env, batch, 0.0, env.horizon(), {}, {}, opt);
  ExactHitting out;
  out.truncated_mean = std::move(occupation);
  out.survival.resize(static_cast<std::size_t>(states));
  for (Eigen::Index c = 0; c < states; ++c) out.survival[static_cast<std::size_t>(c)] = batch.col(c).sum();
  out.truncation_error = stats.truncation_error;
  return out;
}

AnnealedHitting annealed_hitting_exact(const TorusGraph& g, const DynParams& params, const VertexSet& target,
                                       const EnvSampling& envs) {
  if (envs.samples == 0) throw InputError("need at least one environment sample");
  std::vector<ExactHitting> per_env(envs.samples);
  parallel_for(envs.samples, [&](std::size_t i) {
    const auto env = dynenv::sample_env(g, params, envs.init, derive_seed(envs.seed, i));
    per_env[i] = quenched_hitting_exact(env, target);
  });
  const auto states = g.vertex_count();
  AnnealedHitting out;
  out.mean.resize(states);
  out.standard_error.resize(states);
  for (std::size_t x = 0; x < states; ++x) {
    std::vector<double> samples;
    for (const auto& h : per_env) {
      samples.push_back(h.truncated_mean[x]);
      out.max_censored_fraction = std::max(out.max_censored_fraction, h.survival[x]);
    }
    out.mean[x] = stats::mean(samples);
    out.standard_error[x] = std::sqrt(stats::variance(samples) / static_cast<double>(samples.size()));
    if (out.mean[x] > out.max_mean) {
      out.max_mean = out.mean[x];
      out.argmax = static_cast<Vertex>(x);
    }
  }
  return out;
}

LowerBoundReport quenched_lower_bound_experiment(const TorusGraph& g, const DynParams& params, double beta,
                                                 double eps, const EnvSampling& envs,
                                                 const LowerBoundOptions& options) {
  if (!(beta > 0.0) || !(params.mu > 0.0)) throw InputError("beta and mu must be positive");
  LowerBoundReport r;
  r.beta = beta;
  const double n = g.side();
  r.time = beta * n * n / params.mu;
  const double isolation_window = beta / params.mu;
  DynParams run = params;
  run.horizon = options.compute_tv ? std::max(r.time, isolation_window) : isolation_window;
  if (options.compute_tv && g.vertex_count() > walk::kDefaultStateBudget) {
    throw CapabilityError("quenched TV needs exact evolution; disable compute_tv for this size");
  }
  std::vector<double> tvs(envs.samples, 0.0);
  std::vector<std::uint8_t> isolated(envs.samples, 0);
  const Dist pi = uniform(g.vertex_count());
  parallel_for(envs.samples, [&](std::size_t i) {
    const auto env = dynenv::sample_env(g, run, envs.init, derive_seed(envs.seed, i));
    if (options.compute_isolation) isolated[i] = dynenv::isolated_vertex_exists(env, isolation_window).exists;
    if (options.compute_tv) tvs[i] = tv(walk::exact_quenched_distribution(env, options.start, r.time), pi);
  });
  const auto m = envs.samples;
  if (options.compute_tv) {
    r.tvs = tvs;
    r.mean_tv = stats::mean_ci(tvs);
    for (double v : tvs) r.near_one += v > 1.0 - eps ? 1 : 0;
    r.near_one_fraction = {static_cast<double>(r.near_one) / static_cast<double>(m), stats::wilson(r.near_one, m)};
  }
  if (options.compute_isolation) {
    for (auto b : isolated) r.isolated += b;
    r.isolated_fraction = {static_cast<double>(r.isolated) / static_cast<double>(m), stats::wilson(r.isolated, m)};
  }
  return r;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv_header(std::ostream& out) {
  out << "schema,config_hash,cell_id,seed,d,n,p,mu,eps,env_seed,x,statistic,value,ci_lo,ci_hi,method,censored_frac\n";
}

void write_csv_row(std::ostream& out, const Record& r) {
  out << kResultsSchemaVersion << ',' << r.config_hash << ',' << r.cell_id << ',' << r.seed << ',' << r.d << ','
      << r.n << ',' << format_number(r.p) << ',' << format_number(r.mu) << ',' << format_number(r.eps) << ','
      << r.env_seed << ',' << r.x << ',' << r.statistic << ',' << format_number(r.value) << ','
      << format_number(r.ci_lo) << ',' << format_number(r.ci_hi) << ',' << r.method << ','
      << format_number(r.censored_frac) << '\n';
}

void write_jsonl_row(std::ostream& out, const Record& r) {
  auto num = [](double v) {
    return std::isfinite(v) ? format_number(v) : "\"" + format_number(v) + "\"";
  };
  out << "{\"schema\":" << kResultsSchemaVersion << ",\"config_hash\":\"" << r.config_hash << "\",\"cell_id\":\""
      << r.cell_id << "\",\"seed\":" << r.seed << ",\"d\":" << r.d << ",\"n\":" << r.n << ",\"p\":" << num(r.p)
      << ",\"mu\":" << num(r.mu) << ",\"eps\":" << num(r.eps) << ",\"env_seed\":" << r.env_seed
      << ",\"x\":" << r.x << ",\"statistic\":\"" << r.statistic << "\",\"value\":" << num(r.value)
      << ",\"ci_lo\":" << num(r.ci_lo) << ",\"ci_hi\":" << num(r.ci_hi) << ",\"method\":\"" << r.method
      << "\",\"censored_frac\":" << num(r.censored_frac) << "}\n";
}

}  // namespace dynaperc::dist
