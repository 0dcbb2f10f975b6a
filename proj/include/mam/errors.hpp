#pragma once

#include <stdexcept>
#include <string>

namespace mam {

// Base class for every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree; the message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN/Inf, or a non-finite value was fed in.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Out-of-range index, invalid argument, state space too large, etc.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Run-config parsing and validation failures.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failures (open/read/write).
class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint format violations: bad magic, version, checksum, index.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace mam
