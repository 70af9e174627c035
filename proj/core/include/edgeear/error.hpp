// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace edgeear {

// Base for every error raised by the library. Subclasses map onto the
// command-line exit codes (config/load -> 2, numeric -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf values or degenerate inputs such as zero-norm vectors.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Violated precondition of an operation (bad target index, empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class AnalysisError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgeear
