// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dynaperc/dist.hpp"
#include "dynaperc/expansion.hpp"
#include "dynaperc/rng.hpp"
#include "dynaperc/scenarios.hpp"

using namespace dynaperc;
using namespace dynaperc::scenarios;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) { return dist::format_number(v); }

int failures = 0;

void criterion(int id, const std::string& name, double limit_seconds, const std::function<Verdict()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs <= limit_seconds;
  const bool ok = v.pass && in_time;
  if (!ok) ++failures;
  std::printf("[%s] %2d %s (%.1f s, limit %.0f s%s): %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), secs,
              limit_seconds, in_time ? "" : ", OVER TIME", v.detail.c_str());
  std::fflush(stdout);
}

// Quadrature of int_lo^hi du / (u f(u)^2), split at the given breakpoints.
double quadrature(const std::function<double(double)>& f, double lo, double hi, std::vector<double> breaks) {
  breaks.push_back(lo);
  breaks.push_back(hi);
  std::sort(breaks.begin(), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = std::max(lo, breaks[i]);
    const double b = std::min(hi, breaks[i + 1]);
    if (!(b > a)) continue;
    // Evaluate the step value at the piece's midpoint so the jump sits on a breakpoint.
    const double value = f(0.5 * (a + b));
    auto g = [&](double u) { return 1.0 / (u * value * value); };
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, a, b, 15, 1e-14);
  }
  return total;
}

Verdict edge_law() {
  const auto cells = edge_law_suite({0.3, 0.6}, {0.5, 0.125}, {0.5, 1.0, 2.0, 4.0}, 1000, 100, 101);
  std::size_t within = 0, samples = 0;
  double worst = 0.0;
  for (const auto& c : cells) {
    within += c.within;
    samples = c.samples;
    worst = std::max(worst, std::abs(c.empirical - c.expected) / c.sigma);
  }
  const double frac = static_cast<double>(within) / static_cast<double>(cells.size());
  return {frac >= 0.95 && samples >= 100000,
          std::to_string(within) + "/" + std::to_string(cells.size()) + " cells within 3 sigma, " +
              std::to_string(samples) + " samples per cell, worst |z| = " + fmt(worst)};
}

Verdict kernel_invariants() {
  const auto a = kernel_invariant_suite(1, 8, 100, 4.0, 201);
  const auto b = kernel_invariant_suite(2, 4, 100, 4.0, 202);
  const double row = std::max(a.max_row_error, b.max_row_error);
  const double col = std::max(a.max_column_error, b.max_column_error);
  const double diag = std::min(a.min_unit_diagonal, b.min_unit_diagonal);
  const double floor = std::exp(-1.0) - 1e-12;
  return {row <= 1e-10 && col <= 1e-10 && diag >= floor && a.environments + b.environments == 200,
          std::to_string(a.environments + b.environments) + " environments, " +
              std::to_string(a.kernels + b.kernels) + " kernels, max row error " + fmt(row) + ", max column error " +
              fmt(col) + ", min unit-window diagonal " + fmt(diag) + " (floor 1/e = " + fmt(std::exp(-1.0)) + ")"};
}

Verdict evoset_suite() {
  const auto r = evoset_lemma_suite(1000, 6, 301);
  return {r.chains == 1000 && r.max_martingale_defect <= 1e-12 && r.max_doob_defect <= 1e-12 &&
              r.max_duality_defect <= 1e-12 && r.psi_phi_violations == 0,
          std::to_string(r.chains) + " chains, " + std::to_string(r.sets) + " sets; martingale " +
              fmt(r.max_martingale_defect) + ", Doob " + fmt(r.max_doob_defect) + ", duality " +
              fmt(r.max_duality_defect) + ", psi-phi violations " + std::to_string(r.psi_phi_violations) +
              " (min slack " + fmt(r.min_psi_phi_slack) + ")"};
}

Verdict marginal() {
  const auto r = marginal_identity_suite(100, 5, 6, 401);
  return {r.chains == 100 && r.max_error <= 1e-9,
          std::to_string(r.chains) + " chains, max error " + fmt(r.max_error) + ", pruned mass " + fmt(r.pruned_mass)};
}

Verdict z_bounds() {
  std::string detail;
  bool ok = true;
  for (double eps : {0.04, 0.1}) {
    const auto r = z_bound_suite(50, eps, 501);
    ok = ok && r.instances == 50 && r.chi_violations == 0 && r.contraction_violations == 0 && r.lemma_failures == 0 &&
         r.lemma_unchecked == 0;
    detail += "eps " + fmt(eps) + ": " + std::to_string(r.instances) + " instances, chi violations " +
              std::to_string(r.chi_violations) + ", contraction violations " +
              std::to_string(r.contraction_violations) + ", lemma failures " + std::to_string(r.lemma_failures) +
              ", max E[Z]/sqrt(eps) " + fmt(r.max_z_over_sqrt_eps) + ", max steps " + std::to_string(r.max_steps) +
              "; ";
  }
  return {ok, detail};
}

Verdict theorem() {
  const auto cases = theorem_suite(24, {0.04, 0.1}, dist::Mode::Exact, 601);
  std::size_t violations = 0, variants = 0, non_exact = 0, bounds = 0, weaker = 0;
  double worst = 0.0;
  for (const auto& c : cases) {
    if (!c.report.pass) ++violations;
    if (!c.report.psi_not_weaker) ++weaker;
    if (c.variant) ++variants;
    for (const auto& t : c.report.tails) {
      if (t.method == "mc") ++non_exact;
      if (t.method == "exact-bound") ++bounds;
      worst = std::max(worst, t.tail / c.report.threshold);
    }
  }
  return {cases.size() == 48 && violations == 0 && non_exact == 0 && weaker == 0,
          std::to_string(cases.size() / 2) + " instances (" + std::to_string(variants / 2) +
              " lazy-coupled variants) x 2 eps, violations " + std::to_string(violations) + ", max tail/threshold " +
              fmt(worst) + ", certified-bound tails " + std::to_string(bounds) + ", Monte Carlo tails " +
              std::to_string(non_exact) + ", n_phi < n_psi cases " + std::to_string(weaker)};
}

Verdict counterexample() {
  const auto r = counterexample_report(1000, 20, 701);
  return {r.annealed_tv_x1 == 0.0 && r.quenched_exact_half == 1000 && !r.theorem_applicable,
          "annealed TV(X_1) = " + fmt(r.annealed_tv_x1) + ", quenched TV exactly 1/2 on " +
              std::to_string(r.quenched_exact_half) + "/" + std::to_string(r.paths) + " paths, gamma = " +
              fmt(r.gamma) + " (theorem " + (r.theorem_applicable ? "applies" : "inapplicable") + ")"};
}

std::string cell_table(const std::vector<ScalingCell>& cells) {
  std::string out;
  for (const auto& c : cells) {
    out += "n=" + std::to_string(c.n) + ",mu=" + fmt(c.mu) + ":" + fmt(c.summary) + " ";
  }
  return out;
}

Verdict subcritical_scaling() {
  std::vector<ScalingCell> cells;
  for (unsigned n : {8u, 16u, 32u}) {
    for (double mu : {0.5, 0.125}) cells.push_back(mixing_cell(1, n, 0.5, mu, 0.25, 30, 801));
  }
  const auto fit = fit_scaling(cells);
  double censored = 0.0;
  for (const auto& c : cells) censored = std::max(censored, c.censored_fraction);
  const bool ok = std::abs(fit.n_exponent - 2.0) <= 0.4 && std::abs(fit.inv_mu_exponent - 1.0) <= 0.4 &&
                  censored == 0.0;
  return {ok, "median t_mix: " + cell_table(cells) + "| n-exponent " + fmt(fit.n_exponent) + " (2 +- 0.4), 1/mu-exponent " +
                  fmt(fit.inv_mu_exponent) + " (1 +- 0.4), rms residual " + fmt(fit.residual_rms) +
                  ", unmixed fraction " + fmt(censored)};
}

Verdict hitting_scaling() {
  std::vector<ScalingCell> cells;
  for (unsigned n : {8u, 16u, 32u}) {
    for (double mu : {0.5, 0.125}) cells.push_back(hitting_cell(1, n, 0.5, mu, 30, 901));
  }
  const auto fit = fit_scaling(cells);
  double censored = 0.0;
  bool under = true;
  for (const auto& c : cells) {
    censored = std::max(censored, c.censored_fraction);
    under = under && c.summary <= fit.max_constant * c.n * c.n / c.mu * (1.0 + 1e-12);
  }
  const bool ok = std::abs(fit.n_exponent - 2.0) <= 0.4 && std::abs(fit.inv_mu_exponent - 1.0) <= 0.4 && under &&
                  censored <= 1e-3;
  return {ok, "max_x E[tau_A]: " + cell_table(cells) + "| n-exponent " + fmt(fit.n_exponent) + ", 1/mu-exponent " +
                  fmt(fit.inv_mu_exponent) + ", C = " + fmt(fit.max_constant) + " (smallest ratio " +
                  fmt(fit.min_constant) + "), max P(tau_A > T) " + fmt(censored)};
}

Verdict lower_bounds() {
  const auto iso = isolation_frequency(2, 32, 0.5, 0.125, 0.1, 200, 1001);
  const std::vector<double> betas{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  const auto scan = tv_beta_scan(1, 16, 0.5, 1.0 / 64.0, betas, 0.25, 0.95, 100, 1002);
  std::string rows;
  for (const auto& r : scan.rows) rows += "beta=" + fmt(r.beta) + ":" + fmt(r.near_one_fraction) + " ";
  return {iso.fraction.value >= 0.99 && scan.beta0 > 0.0,
          "isolated-vertex frequency " + fmt(iso.fraction.value) + " over 200 environments (d=2, n=32, beta=0.1); "
          "fraction with TV > 0.75 (d=1, n=16, mu=1/64): " + rows + "-> beta0 = " + fmt(scan.beta0)};
}

Verdict expansion_bound() {
  std::string detail;
  bool ok = true;
  for (auto [d, n] : {std::pair{1u, 16u}, std::pair{2u, 4u}}) {
    for (double mu : {0.5, 0.125}) {
      const auto r = expansion_lower_bound_suite(d, n, 0.5, mu, 100, 1100 + d);
      ok = ok && r.violations == 0 && r.environments == 100;
      detail += "d=" + std::to_string(d) + ",n=" + std::to_string(n) + ",mu=" + fmt(mu) + ": c=" + fmt(r.witness) +
                ", violations " + std::to_string(r.violations) + ", min ratio " + fmt(r.min_ratio) + "; ";
    }
  }
  return {ok, detail};
}

Verdict integral_plumbing() {
  Rng rng(1201);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // Random nonincreasing step profile on [r0, 1/2].
    const std::size_t knots = 1 + rng.below(8);
    std::vector<double> rs;
    for (std::size_t i = 0; i < knots; ++i) rs.push_back(std::exp(std::log(1e-4) * rng.uniform()) * 0.5);
    std::sort(rs.begin(), rs.end());
    rs.erase(std::unique(rs.begin(), rs.end()), rs.end());
    if (rs.back() != 0.5) rs.push_back(0.5);
    std::vector<expansion::ExpansionProfile::Knot> ks;
    double v = 0.5 + rng.uniform();
    for (double r : rs) {
      ks.push_back({r, v});
      v *= 0.2 + 0.8 * rng.uniform();
    }
    const auto cert = expansion::CertifiedProfile::from_exact(
        expansion::ExpansionProfile(ks, expansion::Provenance::ExactEnumerated));
    const double pi_x = rs.front() / 4.0 * (1.0 + rng.uniform());
    const double eps = 0.01 + 0.5 * rng.uniform();
    const double closed = expansion::mixing_integral(cert, pi_x, eps);
    const double quad = quadrature([&](double u) { return cert.profile()(u); }, 4.0 * pi_x, 4.0 / eps, rs);
    worst = std::max(worst, std::abs(closed - quad) / quad);
  }

  // Torus analytic profile phi(r) = s / (n min(r, 1/2)^(1/d)) with s = c sigma^2 mu^2.
  double worst_torus = 0.0, worst_slope = 0.0, worst_mu = 0.0;
  double shape_lo = std::numeric_limits<double>::infinity(), shape_hi = 0.0;
  for (unsigned d : {1u, 2u}) {
    const double c = expansion::torus_phi_witness(d, d == 1 ? 2.0 : iso_constant(torus::TorusGraph(2, 4)), 0.5);
    for (unsigned n : {16u, 64u, 256u}) {
      for (double eps : {0.1, 0.01, 0.001}) {
        double reference = 0.0;
        for (double mu : {0.5, 0.25, 0.125}) {
          const double s = c * 0.01 * mu * mu;
          const double closed = expansion::torus_analytic_integral(d, n, s, eps);
          auto phi = [&](double u) { return s / (n * std::pow(std::min(u, 0.5), 1.0 / d)); };
          const double lo = 4.0 / std::pow(static_cast<double>(n), d);
          // Integrate the smooth part directly rather than as steps.
          auto g = [&](double u) { return 1.0 / (u * phi(u) * phi(u)); };
          double quad = 0.0;
          if (lo < 0.5) quad += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, lo, 0.5, 15, 1e-14);
          quad += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, std::max(lo, 0.5), 4.0 / eps, 15,
                                                                                1e-14);
          worst_torus = std::max(worst_torus, std::abs(closed - quad) / quad);
          const double slope = n * n * std::pow(0.5, 2.0 / d) / (s * s);
          const double gap = expansion::torus_analytic_integral(d, n, s, eps / 2.0) - closed;
          worst_slope = std::max(worst_slope, std::abs(gap - slope * std::log(2.0)) / (slope * std::log(2.0)));
          // closed * mu^4 must not depend on mu.
          const double scaled = closed * std::pow(mu, 4);
          if (reference == 0.0) reference = scaled;
          worst_mu = std::max(worst_mu, std::abs(scaled - reference) / reference);
          const double shape = closed / (std::pow(n / (mu * mu), 2) * std::log(1.0 / eps));
          shape_lo = std::min(shape_lo, shape);
          shape_hi = std::max(shape_hi, shape);
        }
      }
    }
  }
  const bool ok = worst <= 1e-9 && worst_torus <= 1e-9 && worst_slope <= 1e-9 && worst_mu <= 1e-12;
  return {ok, "step profiles: max rel error " + fmt(worst) + " over 100; torus closed form vs quadrature " +
                  fmt(worst_torus) + ", log(1/eps) slope identity " + fmt(worst_slope) + ", mu^4 invariance " +
                  fmt(worst_mu) + ", I / ((n/mu^2)^2 log(1/eps)) in [" + fmt(shape_lo) + ", " + fmt(shape_hi) + "]"};
}

}  // namespace

int main() {
  criterion(1, "edge-law exactness", 60, edge_law);
  criterion(2, "kernel invariants", 120, kernel_invariants);
  criterion(3, "evolving-set exact suite", 120, evoset_suite);
  criterion(4, "marginal identity", 120, marginal);
  criterion(5, "Z-process bounds", 180, z_bounds);
  criterion(6, "environment-chain mixing tail", 300, theorem);
  criterion(7, "counterexample reproduction", 10, counterexample);
  criterion(8, "subcritical mixing scaling", 900, subcritical_scaling);
  criterion(9, "hitting-time scaling", 900, hitting_scaling);
  criterion(10, "quenched lower bounds", 600, lower_bounds);
  criterion(11, "expansion lower bound", 300, expansion_bound);
  criterion(12, "integral bound plumbing", 60, integral_plumbing);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
