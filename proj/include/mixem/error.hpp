#pragma once

#include <stdexcept>
#include <string>

namespace mixem {

/// Raised when a caller breaks an operation's precondition (dimension mismatch,
/// empty input, out-of-range parameter).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces non-finite state. `step` carries the
/// iteration index at which the failure was detected, or -1 if not applicable.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, long step = -1)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace mixem
