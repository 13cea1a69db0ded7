#pragma once

#include <stdexcept>
#include <string>

namespace crossnorm {

// Invalid configuration: shape mismatches, out-of-range hyperparameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite values appeared in a numeric pipeline. `layer` is the index of
// the offending network layer, or -1 when not tied to a layer.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, int layer = -1)
      : std::runtime_error(what), layer_(layer) {}

  int layer() const { return layer_; }

 private:
  int layer_;
};

}  // namespace crossnorm
