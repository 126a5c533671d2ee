#pragma once

#include <stdexcept>
#include <string>

namespace bridgelab {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes, bad axes, dimension mismatches.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf produced by an operation, degenerate statistics, divergence.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// File format violations: bad magic, version, checksum, truncation.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Invalid run/generator/model configuration.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

} // namespace bridgelab
