#pragma once

#include <stdexcept>
#include <string>

namespace pte {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can report a stage name and exit non-zero.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown architecture/method/schedule names, malformed config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Precondition on a numeric argument violated (K < 2, T <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data: labels out of range, empty sets, bad files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or gradients.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A method was handed data its contract forbids (e.g. forget labels in D_r).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Phase 1 produced no usable edit instruction.
class ProbingFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace pte
