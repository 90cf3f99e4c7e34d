#pragma once

#include <stdexcept>
#include <string>

namespace idla {

// Base for everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameters or violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A resource cap was hit (steps, shells, solve size, walk budget).
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class StepCapExceeded : public BudgetExceeded {
 public:
  using BudgetExceeded::BudgetExceeded;
};

class ShellCapExceeded : public BudgetExceeded {
 public:
  using BudgetExceeded::BudgetExceeded;
};

class RegionTooLarge : public BudgetExceeded {
 public:
  using BudgetExceeded::BudgetExceeded;
};

// A theorem-level identity failed at runtime. Always an implementation bug
// (or a numerical failure), never an expected outcome.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace idla
