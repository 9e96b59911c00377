#pragma once

#include <stdexcept>
#include <string>

namespace igg {

// Base for every error raised by the library. The CLI maps the concrete
// kinds onto process exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Fields or tensors whose shapes do not agree.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// Invalid configuration values (grid sizes, bandlimits, hyperparameters).
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Malformed or unreadable input data (PGM, checkpoints, datasets).
class DataError : public Error {
  public:
    using Error::Error;
};

class ParseError : public DataError {
  public:
    using DataError::DataError;
};

// Non-finite intermediate values or numerical blow-up.
class NumericError : public Error {
  public:
    using Error::Error;
};

class DivergenceError : public NumericError {
  public:
    DivergenceError(const std::string& what, int step)
        : NumericError(what), step_(step) {}
    int step() const noexcept { return step_; }

  private:
    int step_;
};

} // namespace igg
