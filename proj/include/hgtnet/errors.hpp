#pragma once

#include <stdexcept>
#include <string>

namespace hgt {

// Base of every error the library throws. Subclasses map onto the CLI's
// disjoint exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid spatial geometry (kernel/stride/padding/pool/patch arithmetic).
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter or option value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Violated precondition of a function contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input without enough variety for the requested statistic (e.g. a ROC
// curve over a single class).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Missing or inconsistent dataset content.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (PPM, CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

enum class CheckpointErrorKind { kBadMagic, kVersionMismatch, kTruncated, kMalformed, kMissing };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

}  // namespace hgt
