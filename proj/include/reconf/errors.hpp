#pragma once

#include <stdexcept>
#include <string>

namespace reconf {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// A time-stepped cycle failed to reach its terminating event.
class SimulationDivergence : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// End of life was not reached within the configured cycle budget.
class BudgetExceeded : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A bracketing root solve found no sign change.
class NoRootError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or configuration.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace reconf
