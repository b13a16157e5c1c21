#pragma once

#include <stdexcept>
#include <string>

namespace chainnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid shapes, extents, hyper-parameters or config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A requested length cannot be produced from the available samples.
class LengthError : public Error {
 public:
  using Error::Error;
};

// An operation was called with an argument of the wrong kind (e.g. an
// analog scheme passed to a constellation builder).
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite gradients or losses during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A signal with zero power where a normalization or SNR needs one.
class DegenerateSignalError : public Error {
 public:
  using Error::Error;
};

}  // namespace chainnet
