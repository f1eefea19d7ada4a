#pragma once

#include <stdexcept>
#include <string>

namespace chiforge {

// Bad or inconsistent user input (parameters, config files, enum names).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The requested physics cannot be carried out (resonant detuning, beta
// mismatch, a model that has clearly left its validity window).
class PhysicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integrator or linear-algebra tolerance violation.
class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chiforge
