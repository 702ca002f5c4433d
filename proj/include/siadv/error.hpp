#pragma once

#include <stdexcept>
#include <string>

namespace siadv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Layer or architecture shape does not match what the caller expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or manifest is truncated or internally inconsistent.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DefenseError : public Error {
 public:
  using Error::Error;
};

/// Unknown or missing keys in a run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace siadv
