#pragma once

#include <stdexcept>
#include <string>

namespace impbake {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (non-unit direction,
/// size mismatch, parameter outside its bounds, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupted file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace impbake
