#pragma once

#include <stdexcept>
#include <string>

namespace lfm {

// Base for everything this library throws. The CLI maps subclasses to
// distinct exit codes (config=2, data=3, numeric/domain=4).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: unknown keys, invalid values, inconsistent settings.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data (raw files, containers, checkpoints).
class DataError : public Error {
public:
    using Error::Error;
};

// Feature index outside the vocabulary / table.
class LookupError : public DataError {
public:
    using DataError::DataError;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Geometric precondition violated (off-manifold point, non-tangent vector).
class DomainError : public NumericError {
public:
    using NumericError::NumericError;
};

// Vector length mismatch.
class DimensionError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace lfm
