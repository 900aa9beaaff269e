#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lobtail {

/// Root of the library's exception hierarchy. Each subclass maps onto one CLI
/// exit code (see `exit_code_for`).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(std::size_t row, const std::string& what)
        : DataError("row " + std::to_string(row) + ": " + what), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Series that must share an event grid do not.
class AlignmentError : public DataError {
public:
    using DataError::DataError;
};

/// Numerical failure (exit code 4).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of a mathematical function.
class DomainError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Sample carries no usable variation (zero variance, constant regressor, ...).
class DegenerateError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Requested index range lies outside the sample.
class RangeError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Optimizer did not converge.
class FitError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline int exit_code_for(const std::exception& e) noexcept
{
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const NumericalError*>(&e)) return 4;
    return 1;
}

}  // namespace lobtail
