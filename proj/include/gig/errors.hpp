#pragma once

#include <stdexcept>
#include <string>

namespace gig {

// Base for everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed config, violated model invariant, dimension mismatch.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// The numbers went wrong: blow-up, lost accuracy, eigensolver failure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A backward flow left the finite range (or exceeded its bound) at `time`.
class BlowUpError : public NumericalError {
 public:
  BlowUpError(const std::string& what, double time, int regime = -1)
      : NumericalError(what), time_(time), regime_(regime) {}

  double time() const { return time_; }
  int regime() const { return regime_; }

 private:
  double time_;
  int regime_;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace gig
