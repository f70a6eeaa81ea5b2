// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <stdexcept>
#include <string>

namespace mqpool {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or hyperparameters. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violating a documented precondition. CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical verification failures. CLI exit code 4.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class LengthError : public DataError {
 public:
  using DataError::DataError;
};

class EmptySequenceError : public DataError {
 public:
  EmptySequenceError(const std::string& what, std::size_t row)
      : DataError(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class MaskDomainError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class LabelError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateClassError : public DataError {
 public:
  using DataError::DataError;
};

class SamplingError : public DataError {
 public:
  using DataError::DataError;
};

class LookupError : public DataError {
 public:
  using DataError::DataError;
};

class CoverageError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateInputError : public DataError {
 public:
  using DataError::DataError;
};

// Violated API contract (e.g. non-scalar backward root, empty metric input).
class ContractError : public DataError {
 public:
  using DataError::DataError;
};

class DeterminismError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace mqpool
