#pragma once

#include <stdexcept>
#include <string>

namespace corrmem {

/// Raised when a model, spec or argument violates its documented invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an exact (enumeration) path would exceed its state-space cap.
class ResourceLimitError : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace corrmem
