// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tokensplat {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes. The message names the operation and both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value, unknown key, or violated precondition on inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a failed numerical check.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tokensplat
