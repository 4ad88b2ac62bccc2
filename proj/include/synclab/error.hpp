#pragma once

#include <stdexcept>
#include <string>

namespace synclab {

/// Invalid configuration or dimensions. The message names the violated
/// constraint.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by its arguments.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Shapes of two objects that must agree do not.
class DimensionError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Training or verification hit a state it cannot continue from.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace synclab
