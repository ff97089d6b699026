#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dynaperc/rng.hpp"

namespace dynaperc::chain {

/// Subsets of a small state space as bit masks (bit y set <=> y in S).
using Subset = std::uint64_t;
using Kernel = Eigen::MatrixXd;   // row-stochastic
using Measure = Eigen::VectorXd;

inline constexpr std::size_t kMaxMaskStates = 63;

inline Subset full_set(std::size_t states) { return (Subset{1} << states) - 1; }
inline Subset complement(Subset s, std::size_t states) { return ~s & full_set(states); }
inline bool contains(Subset s, std::size_t y) { return (s >> y) & 1U; }
inline std::size_t cardinality(Subset s) { return static_cast<std::size_t>(std::popcount(s)); }

double mass(const Measure& pi, Subset s);
std::vector<std::size_t> members(Subset s);

/// Throws InputError unless rows are nonnegative, sum to 1 within tol, and pi K = pi within tol.
void check_kernel(const Kernel& k, const Measure& pi, double tol = 1e-12);
/// Throws InputError unless pi is a strictly positive probability vector.
void check_full_support(const Measure& pi, double tol = 1e-12);

double min_diagonal(const Kernel& k);

/// Random strictly positive probability vector.
Measure random_full_support(std::size_t states, Rng& rng);

/// Random kernel with pi stationary: start from the identity flow diag(pi)
/// and push mass around random directed cycles, keeping each diagonal entry
/// at least `min_diagonal` (as a transition probability).
Kernel random_stationary_kernel(const Measure& pi, double min_diagonal, Rng& rng, int cycles = 12);

}  // namespace dynaperc::chain
