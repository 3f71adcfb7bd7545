#pragma once

#include <stdexcept>
#include <string>

namespace ebsched {

// Bad configuration key or value supplied by the user.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (price files, instance files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Action outside the feasible set of the current state.
class FeasibilityError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

// The simulator reached a state its own dynamics should have excluded.
class SimulatorFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or parameters during learning.
class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ebsched
