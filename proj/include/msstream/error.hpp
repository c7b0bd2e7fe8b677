#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace msstream {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or request shape (empty panel, bad basis, bad k).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data that cannot be analysed (non-finite readings, arity mismatch).
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed file or wire input. Carries the 1-based line number when known.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : DataError(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace msstream
