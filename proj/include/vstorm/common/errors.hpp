#pragma once

#include <stdexcept>
#include <string>

namespace vstorm {

/// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Geometry or length mismatch between an operator, a network and its inputs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (IDX, containers, config text).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or violated numeric preconditions.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid user input at the command-line / config level.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace vstorm
