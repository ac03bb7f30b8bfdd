#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace taskmaml {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values (CLI exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor or parameter layout mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent dataset files. Carries file/line context when known.
class DataError : public Error {
public:
    DataError(const std::string& message, std::string file = {}, std::size_t line = 0)
        : Error(format(message, file, line)), file_(std::move(file)), line_(line) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& message, const std::string& file, std::size_t line) {
        if (file.empty()) return message;
        if (line == 0) return file + ": " + message;
        return file + ":" + std::to_string(line) + ": " + message;
    }

    std::string file_;
    std::size_t line_;
};

class MissingFileError : public DataError {
public:
    using DataError::DataError;
};

class DuplicateIdError : public DataError {
public:
    using DataError::DataError;
};

class UnknownIdError : public DataError {
public:
    using DataError::DataError;
};

/// A sampler could not satisfy its size precondition.
class SamplingError : public Error {
public:
    using Error::Error;
};

/// The episode source could not provide enough tasks for a meta-iteration.
class TaskSourceExhausted : public Error {
public:
    TaskSourceExhausted(const std::string& message, std::size_t iteration)
        : Error(message + " (iteration " + std::to_string(iteration) + ")"), message_(message), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }
    /// The message without the iteration suffix.
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::size_t iteration_;
};

}  // namespace taskmaml
