#pragma once

#include <stdexcept>
#include <string>

namespace vfgs {

// Base of every error the library throws. The CLI maps the subclasses onto
// process exit codes (config 2, data 3, numeric 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// I/O, pairing and ingestion failures of the data pipeline.
class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation precondition (non-binary target, dt <= 0, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

#define VFGS_CHECK(cond, ExcType, msg)      \
  do {                                      \
    if (!(cond)) throw ExcType(std::string(msg)); \
  } while (0)

}  // namespace vfgs
