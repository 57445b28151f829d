#pragma once

#include <stdexcept>
#include <string>

namespace phasenet {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CSV, checkpoints, splits).
class DataError : public Error {
public:
    using Error::Error;
};

// Tensor shape or axis mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite values during training or scoring.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace phasenet
