#pragma once

#include <stdexcept>
#include <string>

namespace dyna {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or architectures.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (sigma <= 0, probabilities outside [0, 1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or an inconsistent spectrum.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or incompatible files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A runtime self-check failed.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace dyna
