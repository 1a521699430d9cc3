#pragma once

#include <stdexcept>
#include <string>

namespace aepo {

// Bad argument to a numeric primitive (non-finite logit, T <= 0, token out of range).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Exhaustive enumeration refused because the response space is too large.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a precondition between modules (e.g. rollout missing old log-probs).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite value produced during training or an oracle evaluation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed data file (telemetry, checkpoint). `line` is 1-based, 0 when unknown.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace aepo
