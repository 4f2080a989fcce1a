#pragma once

#include <stdexcept>
#include <string>

namespace rankiqa {

// Dimension or layout mismatch between tensors, specs and batches.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Operation invoked in the wrong order (e.g. backward before forward).
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

// Invalid user-supplied parameter or configuration value.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed, truncated or missing file.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Correlation of a constant vector.
class UndefinedCorrelation : public std::domain_error {
 public:
  explicit UndefinedCorrelation(const std::string& what) : std::domain_error(what) {}
};

}  // namespace rankiqa
