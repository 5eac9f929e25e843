#pragma once

#include <stdexcept>
#include <string>

namespace segopt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or configuration was violated by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite or divergent value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace segopt
