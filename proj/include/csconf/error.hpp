#pragma once

#include <stdexcept>
#include <string>

namespace csconf {

// Malformed on-disk data: bad magic, truncated payload, non-finite values,
// grammar violations in manifests, calibrator files or configs.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that violates a data contract (missing labels, class
// count mismatch, method/task mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed an argument outside the operation's domain.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace csconf
