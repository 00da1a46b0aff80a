#pragma once

#include <stdexcept>
#include <string>

namespace scotkit {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input (bad noise law, dimension mismatch,
// unparsable problem file, ...). CLI maps this to exit code 2.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what) {}
};

// A numeric precondition failed (membership tolerance exceeded,
// infeasible control, trajectory/control mismatch, ...).
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error(what) {}
};

// Requested operation is not defined for this set/cone variant.
class UnsupportedVariantError : public Error {
 public:
  explicit UnsupportedVariantError(const std::string& what) : Error(what) {}
};

}  // namespace scotkit
