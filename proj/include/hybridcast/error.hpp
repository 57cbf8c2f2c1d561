#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace hybridcast {

/// Root of every error the library throws. Callers that only care about
/// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (matrix product, weight/input sizes, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value lies outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A length, window, or count is too small or too large for the request.
class SizingError : public Error {
public:
    using Error::Error;
};

/// An object was used before it reached the required state.
class StateError : public Error {
public:
    using Error::Error;
};

/// Configuration is invalid; raised before any input data is touched.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input file layout is wrong (missing or unknown column, empty header).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A data row violates a record invariant. Carries the 1-based line number
/// of the offending row when one is known.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what, std::optional<std::size_t> line = std::nullopt)
        : Error(line ? "line " + std::to_string(*line) + ": " + what : what), line_(line) {}

    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    std::optional<std::size_t> line_;
};

/// Optimisation diverged. Carries the 1-based epoch at which it happened.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::size_t epoch)
        : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Filesystem or stream failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace hybridcast
