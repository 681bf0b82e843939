#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace apsgd {

// Raised when an operation's documented precondition does not hold, or when
// a parameter set is rejected as infeasible. The CLI maps it to exit code 2.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Iterate left the finite region (or crossed the divergence guard).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::int64_t step, const std::string& what)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

class NonConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal bookkeeping went wrong (e.g. a live trace whose snapshot step is
// ahead of its apply step).
class RecordingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw PreconditionError(what);
}

}  // namespace apsgd
