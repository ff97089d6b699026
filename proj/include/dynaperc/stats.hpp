#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dynaperc::stats {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Estimate {
  double value = 0.0;
  Interval ci;
};

/// Wilson score interval for a binomial proportion; z = 3 gives ~99.7%.
Interval wilson(std::size_t successes, std::size_t trials, double z = 3.0);

/// Sample mean with a normal-approximation interval of +-z standard errors.
Estimate mean_ci(std::span<const double> xs, double z = 3.0);

double mean(std::span<const double> xs);
double variance(std::span<const double> xs);  // unbiased
double median(std::vector<double> xs);
double quantile(std::vector<double> xs, double q);

/// Compensated (Neumaier) summation; order-stable for aggregation.
double kahan_sum(std::span<const double> xs);

/// Upper tail P(Bin(m, q) >= k), summed exactly in log space.
double binomial_upper_tail(std::size_t m, double q, std::size_t k);

struct PowerFit {
  std::vector<double> exponents;  // one per regressor
  double log_prefactor = 0.0;
  double residual_rms = 0.0;
};

/// Least-squares fit of log(y) = a + sum_j b_j log(x_j).
/// Each row of regressors holds the x_j for one observation.
PowerFit fit_power_law(const std::vector<std::vector<double>>& regressors,
                       std::span<const double> y);

/// Pearson chi-square upper tail probability for `dof` degrees of freedom.
double chi_square_sf(double statistic, double dof);

}  // namespace dynaperc::stats
