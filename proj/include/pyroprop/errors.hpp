#pragma once

#include <stdexcept>
#include <string>

namespace pyroprop {

// Bad argument values or shapes (precondition violations).
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

// Tensor/raster shape mismatches.
class InvalidShape : public InvalidInput {
public:
    explicit InvalidShape(const std::string& msg) : InvalidInput(msg) {}
};

// Malformed or truncated on-disk artifacts.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset/pipeline failures (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training diverged (CLI exit code 4).
class NonConvergence : public std::runtime_error {
public:
    explicit NonConvergence(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace pyroprop
