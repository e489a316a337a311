#pragma once

#include <stdexcept>
#include <string>

namespace camflow {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// config 2, io 3, numeric 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/bounds violations are programming or configuration mistakes; the CLI
// reports them as config errors.
struct ShapeError : ConfigError {
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

struct BoundsError : ConfigError {
    explicit BoundsError(const std::string& msg) : ConfigError(msg) {}
};

}  // namespace camflow
