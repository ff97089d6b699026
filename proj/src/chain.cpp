#include "dynaperc/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynaperc/error.hpp"

namespace dynaperc::chain {

double mass(const Measure& pi, Subset s) {
  double m = 0.0;
  while (s != 0) {
    m += pi(std::countr_zero(s));
    s &= s - 1;
  }
  return m;
}

std::vector<std::size_t> members(Subset s) {
  std::vector<std::size_t> out;
  while (s != 0) {
    out.push_back(static_cast<std::size_t>(std::countr_zero(s)));
    s &= s - 1;
  }
  return out;
}

void check_full_support(const Measure& pi, double tol) {
  if (pi.size() == 0) throw InputError("stationary distribution is empty");
  if ((pi.array() <= 0.0).any()) throw InputError("stationary distribution must have full support");
  if (std::abs(pi.sum() - 1.0) > tol) throw InputError("stationary distribution must sum to 1");
}

void check_kernel(const Kernel& k, const Measure& pi, double tol) {
  if (k.rows() != k.cols() || k.rows() != pi.size()) throw InputError("kernel shape does not match state space");
  if ((k.array() < -tol).any()) throw InputError("kernel has a negative entry");
  if (((k.rowwise().sum().array() - 1.0).abs() > tol).any()) throw InputError("kernel rows must sum to 1");
  const Eigen::RowVectorXd moved = pi.transpose() * k;
  if (((moved.transpose() - pi).array().abs() > tol).any()) throw InputError("pi is not stationary for the kernel");
}

double min_diagonal(const Kernel& k) { return k.diagonal().minCoeff(); }

Measure random_full_support(std::size_t states, Rng& rng) {
  Measure pi(static_cast<Eigen::Index>(states));
  for (Eigen::Index i = 0; i < pi.size(); ++i) pi(i) = 0.2 + rng.uniform();
  return pi / pi.sum();
}

Kernel random_stationary_kernel(const Measure& pi, double min_diag, Rng& rng, int cycles) {
  const auto m = static_cast<std::size_t>(pi.size());
  // flow(x, y) = pi(x) K(x, y); both margins stay equal to pi throughout.
  Eigen::MatrixXd flow = pi.asDiagonal();
  if (m < 2) return Kernel::Identity(1, 1);
  std::vector<std::size_t> order(m);
  for (int c = 0; c < cycles; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = m - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    const std::size_t length = 2 + rng.below(m - 1);
    double room = 1.0;
    for (std::size_t i = 0; i < length; ++i) {
      const auto x = order[i];
      room = std::min(room, flow(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(x)) - min_diag * pi(static_cast<Eigen::Index>(x)));
    }
    if (room <= 0.0) continue;
    const double delta = room * rng.uniform();
    for (std::size_t i = 0; i < length; ++i) {
      const auto x = static_cast<Eigen::Index>(order[i]);
      const auto y = static_cast<Eigen::Index>(order[(i + 1) % length]);
      flow(x, y) += delta;
      flow(x, x) -= delta;
    }
  }
  Kernel k = pi.cwiseInverse().asDiagonal() * flow;
  // Remove rounding drift in the row sums without touching off-diagonals.
  for (Eigen::Index x = 0; x < k.rows(); ++x) k(x, x) += 1.0 - k.row(x).sum();
  return k;
}

}  // namespace dynaperc::chain
