#pragma once

#include <stdexcept>
#include <string>

namespace orf {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Schema/config-document problems: missing columns, duplicate roles, bad keys.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A cell or row of an input file could not be parsed into a finite number.
class IngestError : public Error {
 public:
  using Error::Error;
};

// A count precondition was violated (too few rows, subsample out of range...).
class SizeError : public Error {
 public:
  using Error::Error;
};

// Mismatched vector/matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid sample weights (negative, all zero).
class WeightError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration value; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_ = -1;
};

// No residual treatment variation at a node or test point.
class NoVariationError : public Error {
 public:
  using Error::Error;
};

class DegenerateHessianError : public Error {
 public:
  using Error::Error;
};

// Rank-deficient regression design.
class RankError : public Error {
 public:
  using Error::Error;
};

// Weak or degenerate instrument in the IV moment.
class WeakInstrumentError : public Error {
 public:
  using Error::Error;
};

// Revenue curve has no interior maximum.
class NonConcaveError : public Error {
 public:
  using Error::Error;
};

// Argument outside its allowed domain (e.g. price outside bounds).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace orf
