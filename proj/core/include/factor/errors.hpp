#pragma once

#include <stdexcept>
#include <string>

namespace factor {

/// Base class for every error raised by the library. Errors of this family
/// describe bad input (files, parameters, mismatched data) and map to exit
/// code 1 in the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operator or config parameter lies outside its documented domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Inputs are individually valid but inconsistent with each other
/// (image id mismatch, vocabulary mismatch, dimension mismatch).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A document could not be parsed or lacks required structure.
class MalformedDocument : public Error {
 public:
  using Error::Error;
};

/// A document declares a schema version this build does not read.
class VersionMismatch : public Error {
 public:
  using Error::Error;
};

/// A value violates a data-model invariant. The message names the field.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// The synthetic scene generator could not satisfy its layout constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// I/O failure on a declared path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace factor
