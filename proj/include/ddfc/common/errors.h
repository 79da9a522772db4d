#pragma once

#include <stdexcept>
#include <string>

namespace ddfc {

/// Malformed input: dimension mismatches, unknown variables, bad parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced non-finite values or hit a singular matrix.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A synthesis or topology problem has no feasible point under the
/// formulation used.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ddfc
