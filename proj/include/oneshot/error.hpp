#pragma once

#include <stdexcept>
#include <string>

namespace oneshot {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad TOML, out-of-range parameter,
/// missing referenced file).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be used: unreadable files, malformed records,
/// inconsistent dimensions, missing poses.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A binary file whose framing is wrong: bad magic, unsupported version,
/// checksum failure, truncation.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// A geometric configuration that admits no unique answer (collinear
/// correspondences, identical points).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace oneshot
