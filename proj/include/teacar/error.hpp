#pragma once

#include <stdexcept>
#include <string>

namespace teacar {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument value or shape.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Payload kind does not match the topic kind.
class KindMismatchError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Operation not allowed in the bus's current mode.
class ModeError : public Error {
 public:
  using Error::Error;
};

// Device or object is not in a state that permits the operation.
class StateError : public Error {
 public:
  using Error::Error;
};

// Malformed file, bad magic, truncated data, digest mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace teacar
