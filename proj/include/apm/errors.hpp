#pragma once

#include <stdexcept>
#include <string>

namespace apm {

// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration field or config-file syntax.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Backward pass invoked on a consumed graph, or on a non-scalar output.
class GraphError : public Error {
 public:
  using Error::Error;
};

// Non-finite values detected (NaN guard, divergence guard).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Out-of-range physical or generator parameter.
class ParamError : public Error {
 public:
  using Error::Error;
};

// Filesystem / image decoding failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace apm
