#pragma once

#include <stdexcept>
#include <string>

namespace carpetmf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The request would need more terms than the configured enumeration cap.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Every row of the cell system carries zero weight.
class EmptySupport : public Error {
 public:
  using Error::Error;
};

class NotConcave : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace carpetmf
