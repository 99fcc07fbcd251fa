#pragma once

#include <stdexcept>
#include <string>

namespace adgen {

// Bad model/run configuration (rejected before any work starts).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed runtime input (shape mismatch, invariant violation, bad token id).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failure.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace adgen
