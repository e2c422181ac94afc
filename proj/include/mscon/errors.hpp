#pragma once

#include <stdexcept>
#include <string>

namespace mscon {

// Precondition or shape contract broken by the caller.
struct ContractViolation : std::invalid_argument {
  explicit ContractViolation(const std::string& msg) : std::invalid_argument(msg) {}
};

// Input is structurally valid but numerically degenerate (zero-norm row,
// empty positive set, non-finite perturbed value).
struct DegenerateInput : std::runtime_error {
  explicit DegenerateInput(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss or gradient.
struct TrainingDivergence : std::runtime_error {
  explicit TrainingDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

#define MSCON_CHECK(cond, msg)                        \
  do {                                                \
    if (!(cond)) throw ::mscon::ContractViolation(msg); \
  } while (0)

}  // namespace mscon
