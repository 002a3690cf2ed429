#pragma once

#include <stdexcept>
#include <string>

namespace inalu {

// Bad shapes, invalid hyperparameters, malformed files.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// e.g. log of a non-positive entry. Cell code never reaches this.
class NumericDomainError : public std::domain_error {
 public:
  explicit NumericDomainError(const std::string& what) : std::domain_error(what) {}
};

// Something the model guarantees did not hold (non-finite iNALU output, ...).
class InvariantViolation : public std::logic_error {
 public:
  explicit InvariantViolation(const std::string& what) : std::logic_error(what) {}
};

}  // namespace inalu
