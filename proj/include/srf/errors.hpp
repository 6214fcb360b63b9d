#pragma once

#include <stdexcept>
#include <string>

namespace srf {

// Input that violates a structural contract (shapes, unknown names, bad files).
class contract_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A flow or scenario that parses but fails validation.
class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solver did not reach its tolerance budget.
class numerical_failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace srf
