#pragma once

#include <stdexcept>
#include <string>

namespace sgac {

/// A precondition stated by an operation's contract was not met.
struct ContractViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Least-squares fit has too few records or no usable variation.
struct FitDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The candidate pool cannot supply another batch.
struct PoolExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Backend failure. `retriable` separates transport trouble (timeouts,
/// connection resets, 5xx) from protocol errors that will not go away.
struct BackendError : std::runtime_error {
  BackendError(const std::string& what, bool retriable_) : std::runtime_error(what), retriable(retriable_) {}
  bool retriable;
};

}  // namespace sgac
