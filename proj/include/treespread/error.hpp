#pragma once

#include <stdexcept>
#include <string>

namespace treespread {

// Input that violates a documented invariant (bad masses, k < 1, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Evaluation point outside the domain of a map or generating function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A simulation whose expected size exceeds the configured node budget.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Should not happen for validated input; signals a broken numerical premise.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace treespread
