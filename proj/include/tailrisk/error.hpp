#pragma once

#include <stdexcept>
#include <string>

namespace tailrisk {

/// Malformed or inconsistent caller input (lengths, ranges, config values).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value lies outside the mathematical domain of a formula.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A filter recursion produced a non-finite or runaway state.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No candidate of an estimation stage produced a finite objective.
class EstimationFailure : public std::runtime_error {
 public:
  EstimationFailure(const std::string& stage, const std::string& diagnostics)
      : std::runtime_error(stage + ": " + diagnostics), stage_(stage) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace tailrisk
