#include "dynaperc/envlab.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <tuple>
#include <ostream>

#include "dynaperc/error.hpp"

namespace dynaperc::envlab {

namespace {

constexpr double kRowTolerance = 1e-12;

void check_row_stochastic(const Eigen::MatrixXd& m, const std::string& what) {
  if ((m.array() < 0.0).any()) throw InputError(what + " has a negative entry");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m.row(i).sum() - 1.0) > kRowTolerance) throw InputError(what + " row does not sum to 1");
  }
}

double chi_to(const dist::Dist& a, const Measure& pi) { return dist::chi(a, pi); }

}  // namespace

FiniteEnvChain::FiniteEnvChain(Eigen::MatrixXd r, std::vector<Kernel> k, Measure p, bool coupled)
    : R(std::move(r)), kernels(std::move(k)), pi(std::move(p)), lazy_coupled(coupled) {
  if (kernels.empty()) throw InputError("environment chain needs at least one environment state");
  const auto e = static_cast<Eigen::Index>(kernels.size());
  if (R.rows() != e || R.cols() != e) throw InputError("R must be E x E");
  check_row_stochastic(R, "R");
  chain::check_full_support(pi);
  for (const auto& kernel : kernels) chain::check_kernel(kernel, pi);
}

Eigen::MatrixXd FiniteEnvChain::env_transition() const {
  if (!lazy_coupled) return R;
  return 0.5 * (Eigen::MatrixXd::Identity(R.rows(), R.cols()) + R);
}

Kernel FiniteEnvChain::step_kernel(std::size_t zeta, std::size_t next) const {
  const auto& p = kernels.at(next);
  if (!lazy_coupled) return p;
  const double r = R(static_cast<Eigen::Index>(zeta), static_cast<Eigen::Index>(next));
  const double stay = zeta == next ? 0.5 : 0.0;
  const double w = stay + 0.5 * r;
  const auto m = static_cast<Eigen::Index>(states());
  if (w <= 0.0) return p;  // off-support step; any convention is quenched-valid
  return (stay * Eigen::MatrixXd::Identity(m, m) + 0.5 * r * p) / w;
}

std::vector<Kernel> FiniteEnvChain::effective_kernels() const {
  if (!lazy_coupled) return kernels;
  std::vector<Kernel> out;
  const auto m = static_cast<Eigen::Index>(states());
  for (const auto& p : kernels) out.push_back(0.5 * (p + Eigen::MatrixXd::Identity(m, m)));
  return out;
}

double FiniteEnvChain::gamma() const {
  double g = 1.0;
  for (const auto& k : effective_kernels()) g = std::min(g, chain::min_diagonal(k));
  return g;
}

double AnnealedChain::max_row_sum_error() const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < Q.rows(); ++i) worst = std::max(worst, std::abs(Q.row(i).sum() - 1.0));
  return worst;
}

AnnealedChain annealed_kernel(const FiniteEnvChain& chain) {
  AnnealedChain a;
  a.environments = chain.environments();
  a.states = chain.states();
  const auto m = static_cast<Eigen::Index>(a.states);
  const auto e = static_cast<Eigen::Index>(a.environments);
  a.Q = Eigen::MatrixXd::Zero(e * m, e * m);
  for (Eigen::Index z = 0; z < e; ++z) {
    for (Eigen::Index w = 0; w < e; ++w) {
      Eigen::MatrixXd block = chain.R(z, w) * chain.kernels[static_cast<std::size_t>(w)];
      if (chain.lazy_coupled) {
        block *= 0.5;
        if (z == w) block += 0.5 * Eigen::MatrixXd::Identity(m, m);
      }
      a.Q.block(z * m, w * m, m, m) = block;
    }
  }
  return a;
}

dist::Dist annealed_law(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t x0, std::size_t k) {
  if (zeta0 >= chain.environments() || x0 >= chain.states()) throw InputError("start out of range");
  const auto a = annealed_kernel(chain);
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(a.Q.rows());
  row(static_cast<Eigen::Index>(a.index(zeta0, x0))) = 1.0;
  for (std::size_t j = 0; j < k; ++j) row = row * a.Q;
  dist::Dist out = dist::Dist::Zero(static_cast<Eigen::Index>(a.states));
  for (std::size_t z = 0; z < a.environments; ++z) {
    out += row.segment(static_cast<Eigen::Index>(z * a.states), static_cast<Eigen::Index>(a.states)).transpose();
  }
  return out;
}

QuenchedLaw quenched_law(const FiniteEnvChain& chain, std::size_t zeta0, const std::vector<std::size_t>& path,
                         std::size_t x0) {
  if (zeta0 >= chain.environments() || x0 >= chain.states()) throw InputError("start out of range");
  QuenchedLaw q;
  const auto t = chain.env_transition();
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(chain.states()));
  row(static_cast<Eigen::Index>(x0)) = 1.0;
  std::size_t prev = zeta0;
  for (auto next : path) {
    if (next >= chain.environments()) throw InputError("environment path entry out of range");
    if (t(static_cast<Eigen::Index>(prev), static_cast<Eigen::Index>(next)) <= 0.0) q.off_support = true;
    row = row * chain.step_kernel(prev, next);
    prev = next;
  }
  q.law = row.transpose();
  return q;
}

void for_each_path(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t k,
                   const std::function<void(const std::vector<std::size_t>&, double)>& visit) {
  const double count = std::pow(static_cast<double>(chain.environments()), static_cast<double>(k));
  if (count > static_cast<double>(kPathEnumerationLimit)) {
    throw CapabilityError("path enumeration over E^k paths exceeds the limit");
  }
  const auto t = chain.env_transition();
  std::vector<std::size_t> path;
  std::function<void(std::size_t, double)> rec = [&](std::size_t prev, double weight) {
    if (path.size() == k) {
      visit(path, weight);
      return;
    }
    for (std::size_t next = 0; next < chain.environments(); ++next) {
      const double r = t(static_cast<Eigen::Index>(prev), static_cast<Eigen::Index>(next));
      if (r <= 0.0) continue;
      path.push_back(next);
      rec(next, weight * r);
      path.pop_back();
    }
  };
  rec(zeta0, 1.0);
}

dist::Dist annealed_law_by_paths(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t x0, std::size_t k) {
  dist::Dist out = dist::Dist::Zero(static_cast<Eigen::Index>(chain.states()));
  for_each_path(chain, zeta0, k, [&](const std::vector<std::size_t>& path, double w) {
    out += w * quenched_law(chain, zeta0, path, x0).law;
  });
  return out;
}

double expected_quenched_tv(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t x0, std::size_t k) {
  double acc = 0.0;
  for_each_path(chain, zeta0, k, [&](const std::vector<std::size_t>& path, double w) {
    acc += w * dist::tv(quenched_law(chain, zeta0, path, x0).law, chain.pi);
  });
  return acc;
}

FiniteEnvChain counterexample_chain() {
  Kernel identity = Kernel::Identity(2, 2);
  Kernel swap(2, 2);
  swap << 0.0, 1.0, 1.0, 0.0;
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(2, 2, 0.5);
  return FiniteEnvChain(r, {identity, swap}, dist::uniform(2));
}

FiniteEnvChain variant_chain(const FiniteEnvChain& chain) {
  if (chain.lazy_coupled) throw InputError("chain is already lazy-coupled");
  return FiniteEnvChain(chain.R, chain.kernels, chain.pi, true);
}

FiniteEnvChain random_chain(std::size_t environments, std::size_t states, double min_diagonal, bool uniform_pi,
                            Rng& rng) {
  if (environments == 0 || states == 0) throw InputError("random chain needs positive sizes");
  const auto e = static_cast<Eigen::Index>(environments);
  Eigen::MatrixXd r(e, e);
  for (Eigen::Index i = 0; i < e; ++i) {
    for (Eigen::Index j = 0; j < e; ++j) r(i, j) = 0.2 + rng.uniform();
    r.row(i) /= r.row(i).sum();
  }
  Measure pi = uniform_pi ? dist::uniform(states) : chain::random_full_support(states, rng);
  std::vector<Kernel> kernels;
  for (std::size_t z = 0; z < environments; ++z) kernels.push_back(chain::random_stationary_kernel(pi, min_diagonal, rng));
  return FiniteEnvChain(r, std::move(kernels), pi);
}

expansion::CertifiedProfile env_phi_profile(const FiniteEnvChain& chain) {
  const auto eff = chain.effective_kernels();
  std::vector<Kernel> averaged;
  for (std::size_t z = 0; z < chain.environments(); ++z) {
    Kernel k = Kernel::Zero(eff[0].rows(), eff[0].cols());
    for (std::size_t w = 0; w < chain.environments(); ++w) {
      k += chain.R(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(w)) * eff[w];
    }
    averaged.push_back(std::move(k));
  }
  return expansion::profile_phi_exact(averaged, chain.pi);
}

expansion::CertifiedProfile env_psi_profile(const FiniteEnvChain& chain) {
  std::vector<std::vector<double>> weights;
  for (Eigen::Index z = 0; z < chain.R.rows(); ++z) {
    weights.emplace_back();
    for (Eigen::Index w = 0; w < chain.R.cols(); ++w) weights.back().push_back(chain.R(z, w));
  }
  return evoset::psi_profile(chain.effective_kernels(), weights, chain.pi);
}

namespace {

struct Node {
  std::size_t zeta;
  std::vector<double> law;
  bool operator<(const Node& o) const { return std::tie(zeta, law) < std::tie(o.zeta, o.law); }
};

// Exact bad-path mass after `steps` steps, or the last complete level's mass
// when the budget runs out.
TailResult exact_tail(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t x, std::uint64_t steps,
                      double threshold, std::uint64_t budget) {
  TailResult r;
  r.zeta0 = zeta0;
  const auto t = chain.env_transition();
  const auto m = static_cast<Eigen::Index>(chain.states());
  std::vector<std::vector<Kernel>> step(chain.environments());
  for (std::size_t a = 0; a < chain.environments(); ++a) {
    for (std::size_t b = 0; b < chain.environments(); ++b) step[a].push_back(chain.step_kernel(a, b));
  }
  std::map<Node, double> level;
  std::vector<double> start(static_cast<std::size_t>(m), 0.0);
  start[x] = 1.0;
  if (chi_to(Eigen::Map<const Eigen::VectorXd>(start.data(), m), chain.pi) >= threshold) {
    level[{zeta0, start}] = 1.0;
  }
  for (std::uint64_t k = 0; k < steps && !level.empty(); ++k) {
    std::map<Node, double> next;
    for (const auto& [node, p] : level) {
      const Eigen::Map<const Eigen::RowVectorXd> row(node.law.data(), m);
      for (std::size_t w = 0; w < chain.environments(); ++w) {
        const double rw = t(static_cast<Eigen::Index>(node.zeta), static_cast<Eigen::Index>(w));
        if (rw <= 0.0) continue;
        if (++r.nodes > budget) {
          double mass = 0.0;
          for (const auto& entry : level) mass += entry.second;
          r.tail = mass;
          r.ci = {mass, mass};
          r.method = "exact-bound";
          r.pass = mass <= threshold;
          return r;
        }
        const Eigen::RowVectorXd moved = row * step[node.zeta][w];
        if (chi_to(moved.transpose(), chain.pi) < threshold) continue;
        next[{w, std::vector<double>(moved.data(), moved.data() + m)}] += p * rw;
      }
    }
    level = std::move(next);
  }
  double mass = 0.0;
  for (const auto& entry : level) mass += entry.second;
  r.tail = mass;
  r.ci = {mass, mass};
  r.method = "exact";
  r.pass = mass <= threshold + 1e-12;
  return r;
}

TailResult mc_tail(const FiniteEnvChain& chain, std::size_t zeta0, std::size_t x, std::uint64_t steps,
                   double threshold, std::size_t paths, std::uint64_t seed) {
  TailResult r;
  r.zeta0 = zeta0;
  r.method = "mc";
  const auto t = chain.env_transition();
  const auto m = static_cast<Eigen::Index>(chain.states());
  std::size_t bad = 0;
  for (std::size_t i = 0; i < paths; ++i) {
    Rng rng(derive_seed(derive_seed(seed, zeta0), i));
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m);
    row(static_cast<Eigen::Index>(x)) = 1.0;
    std::size_t z = zeta0;
    for (std::uint64_t k = 0; k < steps; ++k) {
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t w = chain.environments() - 1;
      for (std::size_t c = 0; c < chain.environments(); ++c) {
        acc += t(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(c));
        if (u < acc) {
          w = c;
          break;
        }
      }
      row = row * chain.step_kernel(z, w);
      z = w;
      if (chi_to(row.transpose(), chain.pi) < threshold) break;
    }
    if (chi_to(row.transpose(), chain.pi) >= threshold) ++bad;
  }
  r.nodes = paths;
  r.tail = static_cast<double>(bad) / static_cast<double>(paths);
  r.ci = stats::wilson(bad, paths);
  r.pass = r.ci.lo <= threshold;
  return r;
}

}  // namespace

TheoremReport theorem_2_1_check(const FiniteEnvChain& chain, std::size_t x, double eps,
                                const TheoremOptions& options) {
  if (x >= chain.states()) throw InputError("state out of range");
  if (!(eps > 0.0 && eps < 1.0)) throw InputError("eps must lie in (0, 1)");
  TheoremReport rep;
  const double gamma = chain.gamma();
  if (gamma <= 0.0) throw DomainError("min diagonal is 0: the mixing theorem does not apply");
  rep.gamma = std::min(gamma, 0.5);
  rep.eps = eps;
  rep.threshold = std::pow(eps, 0.25);
  const double pi_x = chain.pi(static_cast<Eigen::Index>(x));
  rep.n_phi = expansion::integral_mixing_bound(env_phi_profile(chain), rep.gamma, pi_x, eps);
  rep.n_psi = 1 + evoset::psi_step_count(env_psi_profile(chain), pi_x, eps);
  rep.psi_not_weaker = rep.n_phi >= rep.n_psi;
  const std::uint64_t steps = options.steps.value_or(rep.n_phi);
  rep.pass = rep.psi_not_weaker;
  for (std::size_t z = 0; z < chain.environments(); ++z) {
    TailResult r;
    if (options.mode == dist::Mode::Exact) {
      r = exact_tail(chain, z, x, steps, rep.threshold, options.node_budget);
      if (!r.pass && r.method == "exact-bound") {
        const auto nodes = r.nodes;
        r = mc_tail(chain, z, x, steps, rep.threshold, options.mc_paths, options.seed);
        r.nodes += nodes;
      }
    } else {
      r = mc_tail(chain, z, x, steps, rep.threshold, options.mc_paths, options.seed);
    }
    rep.pass = rep.pass && r.pass;
    rep.tails.push_back(std::move(r));
  }
  return rep;
}

evoset::InhomChain inhom_from_blocks(const walk::BlockChain& blocks, bool periodic) {
  if (blocks.kernels.empty()) throw InputError("block chain has no kernels");
  std::vector<Kernel> kernels;
  for (const auto& k : blocks.kernels) kernels.push_back(k.matrix);
  const auto states = static_cast<std::size_t>(kernels.front().rows());
  return evoset::InhomChain(dist::uniform(states), std::move(kernels), periodic);
}

void write_chain(std::ostream& out, const FiniteEnvChain& chain) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "dynaperc-chain 1\n";
  out << "environments " << chain.environments() << "\n";
  out << "states " << chain.states() << "\n";
  out << "lazy_coupled " << (chain.lazy_coupled ? 1 : 0) << "\n";
  auto write_matrix = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
      out << "\n";
    }
  };
  out << "R\n";
  write_matrix(chain.R);
  for (std::size_t z = 0; z < chain.environments(); ++z) {
    out << "kernel " << z << "\n";
    write_matrix(chain.kernels[z]);
  }
  out << "pi\n";
  for (Eigen::Index i = 0; i < chain.pi.size(); ++i) out << (i ? " " : "") << chain.pi(i);
  out << "\n";
  out.precision(old);
}

FiniteEnvChain read_chain(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw InputError("chain spec: expected '" + word + "'");
  };
  auto read_size = [&]() {
    long long v = -1;
    if (!(in >> v) || v < 0) throw InputError("chain spec: bad count");
    return static_cast<std::size_t>(v);
  };
  auto read_matrix = [&](std::size_t rows, std::size_t cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (!(in >> m(i, j))) throw InputError("chain spec: truncated matrix");
      }
    }
    return m;
  };
  expect("dynaperc-chain");
  if (read_size() != 1) throw InputError("chain spec: unsupported version");
  expect("environments");
  const auto e = read_size();
  expect("states");
  const auto m = read_size();
  expect("lazy_coupled");
  const auto coupled = read_size();
  if (coupled > 1) throw InputError("chain spec: lazy_coupled must be 0 or 1");
  expect("R");
  Eigen::MatrixXd r = read_matrix(e, e);
  std::vector<Kernel> kernels;
  for (std::size_t z = 0; z < e; ++z) {
    expect("kernel");
    if (read_size() != z) throw InputError("chain spec: kernels out of order");
    kernels.push_back(read_matrix(m, m));
  }
  expect("pi");
  Measure pi = read_matrix(m, 1);
  return FiniteEnvChain(r, std::move(kernels), pi, coupled == 1);
}

}  // namespace dynaperc::envlab
