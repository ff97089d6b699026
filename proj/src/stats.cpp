#include "dynaperc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "dynaperc/error.hpp"

namespace dynaperc::stats {

Interval wilson(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (phat + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double kahan_sum(std::span<const double> xs) {
  double sum = 0.0;
  double comp = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return kahan_sum(xs) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  std::vector<double> sq(xs.size());
  std::transform(xs.begin(), xs.end(), sq.begin(), [m](double x) { return (x - m) * (x - m); });
  return kahan_sum(sq) / static_cast<double>(xs.size() - 1);
}

Estimate mean_ci(std::span<const double> xs, double z) {
  Estimate e;
  e.value = mean(xs);
  const double se = xs.size() > 1 ? std::sqrt(variance(xs) / static_cast<double>(xs.size())) : 0.0;
  e.ci = {e.value - z * se, e.value + z * se};
  return e;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw InputError("quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  if (std::isinf(xs[lo]) || std::isinf(xs[hi])) return frac < 0.5 ? xs[lo] : xs[hi];
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

double binomial_upper_tail(std::size_t m, double q, std::size_t k) {
  if (k == 0) return 1.0;
  if (k > m) return 0.0;
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return 1.0;
  const double lq = std::log(q);
  const double lr = std::log1p(-q);
  const double lm = std::lgamma(static_cast<double>(m) + 1.0);
  std::vector<double> terms;
  terms.reserve(m - k + 1);
  for (std::size_t j = k; j <= m; ++j) {
    const double jj = static_cast<double>(j);
    const double lt = lm - std::lgamma(jj + 1.0) - std::lgamma(static_cast<double>(m - j) + 1.0) +
                      jj * lq + static_cast<double>(m - j) * lr;
    terms.push_back(std::exp(lt));
  }
  return std::min(1.0, kahan_sum(terms));
}

PowerFit fit_power_law(const std::vector<std::vector<double>>& regressors,
                       std::span<const double> y) {
  if (regressors.size() != y.size() || y.empty()) throw InputError("power fit: size mismatch");
  const auto rows = static_cast<Eigen::Index>(y.size());
  const auto k = static_cast<Eigen::Index>(regressors.front().size());
  Eigen::MatrixXd a(rows, k + 1);
  Eigen::VectorXd b(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    a(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      a(i, j + 1) = std::log(regressors[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    }
    b(i) = std::log(y[static_cast<std::size_t>(i)]);
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  PowerFit fit;
  fit.log_prefactor = coef(0);
  for (Eigen::Index j = 0; j < k; ++j) fit.exponents.push_back(coef(j + 1));
  fit.residual_rms = std::sqrt((a * coef - b).squaredNorm() / static_cast<double>(rows));
  return fit;
}

double chi_square_sf(double statistic, double dof) {
  if (statistic <= 0.0) return 1.0;
  const boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

}  // namespace dynaperc::stats
