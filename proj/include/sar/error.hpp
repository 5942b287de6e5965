#pragma once

#include <stdexcept>
#include <string>

namespace sar {

// Base for every failure the library reports. Precondition violations by the
// caller (mismatched label sets, bad dimensions) use std::invalid_argument.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data: parse failures, unknown labels.
class DataError : public Error {
 public:
  using Error::Error;
};

// Optimization or inference failed numerically.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace sar
