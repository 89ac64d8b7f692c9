#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flightcast {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// NaN/inf encountered where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Categorical index outside the table's cardinality.
class CategoryError : public Error {
public:
    using Error::Error;
};

/// Input data is well formed but semantically invalid (negative counts, duplicate slices, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed CSV row; carries the 1-based line number.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Invalid configuration document or flag combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public NumericError {
public:
    DivergenceError(std::size_t epoch, const std::string& what)
        : NumericError("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Base for model-file load failures.
class LoadError : public Error {
public:
    using Error::Error;
};

class VersionError : public LoadError {
public:
    using LoadError::LoadError;
};

class ChecksumError : public LoadError {
public:
    using LoadError::LoadError;
};

class FormatError : public LoadError {
public:
    using LoadError::LoadError;
};

} // namespace flightcast
