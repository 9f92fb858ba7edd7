#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace se3diff {

// Bad caller input: wrong sizes, out-of-range configuration, malformed tangents.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The numerics cannot produce a trustworthy answer (t below the series floor,
// non-positive truncated density, non-finite simulator state).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A simulation that went non-finite. Carries the step at which it happened.
class SimulationError : public DomainError {
 public:
  SimulationError(std::size_t step, const std::string& what)
      : DomainError("step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace se3diff
