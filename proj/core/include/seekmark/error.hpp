#pragma once

#include <stdexcept>
#include <string>

namespace seekmark {

/// Raised when an argument, configuration field or input record violates a
/// documented precondition. The CLI maps it to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for missing, unreadable or corrupt files. The CLI maps it to exit
/// code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seekmark
