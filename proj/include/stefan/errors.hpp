#pragma once

#include <stdexcept>
#include <string>

namespace stefan {

// Arguments outside an operation's documented usage (bad sizes, indices).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mathematically invalid input (t <= 0, non-finite values).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Input breaks a structural contract, e.g. nonzero Dirichlet values.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Problem data fails a precondition that an override flag may bypass.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stefan
