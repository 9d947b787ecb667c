#pragma once

#include <stdexcept>
#include <string>

namespace recognet {

// Malformed or inconsistent input data (files, headers, masks).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or a diverged computation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration / usage (unknown keys, invalid flag combinations).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace recognet
