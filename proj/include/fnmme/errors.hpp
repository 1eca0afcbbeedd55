#pragma once

#include <stdexcept>
#include <string>

namespace fnmme {

/// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed bytes or text in a persisted file (bad magic, unknown codes).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file ended before the bytes its header declares.
class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Semantically invalid input: duplicate ids, missing fields, empty tables.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class VersionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InsufficientDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyCaptionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Non-finite values reached the optimizer.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fnmme
