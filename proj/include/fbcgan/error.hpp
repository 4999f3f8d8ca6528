#pragma once

#include <stdexcept>
#include <string>

namespace fbc {

/// Precondition violations on shapes, ranges and arguments.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A config value parsed correctly but is out of its allowed range.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MetricBackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the trainer when a loss term turns non-finite.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fbc
