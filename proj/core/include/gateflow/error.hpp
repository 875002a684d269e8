#pragma once

#include <stdexcept>
#include <string>

namespace gateflow {

/// Invalid numeric or structural argument to a pure function.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation called in a state its contract does not allow.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Peer sent a frame that does not fit the segment protocol.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration file / flags.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A listening socket could not be bound.
class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required peer (segment, gateway) was unreachable within the retry budget.
class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gateflow
