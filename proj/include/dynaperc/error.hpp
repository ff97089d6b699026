#pragma once

#include <stdexcept>
#include <string>

namespace dynaperc {

// Bad arguments: out-of-range parameters, invalid indices, malformed files.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The request is well-formed but exceeds what an exact routine can do
// (state-space budget, enumeration size). Callers fall back to Monte Carlo.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A query reached past the materialized environment horizon.
class HorizonError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A mathematical precondition of a bound does not hold (zero laziness,
// vanishing profile, undefined chi distance).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace dynaperc
