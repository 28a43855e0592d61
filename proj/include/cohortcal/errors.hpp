#pragma once

#include <stdexcept>
#include <string>

namespace cohortcal {

// Input or configuration that violates a documented precondition.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Forward-model failure: mortality coverage gap, secant failure, bad state.
class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sampler or optimizer failed to meet its stopping rule. `details` carries a
// human-readable diagnostics dump (R-hat trace etc).
class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, std::string details)
      : std::runtime_error(what), details_(std::move(details)) {}
  const std::string& details() const noexcept { return details_; }

 private:
  std::string details_;
};

}  // namespace cohortcal
