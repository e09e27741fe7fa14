#pragma once

#include <stdexcept>
#include <string>

namespace policysim {

// Input data could not be loaded or fails schema checks.
struct PanelError : std::runtime_error {
    explicit PanelError(const std::string& what) : std::runtime_error(what) {}
};

// A numeric kernel failed (non-convergence, singular system, bad fixture).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// The estimation design is degenerate (no control pool, unidentified period).
struct DesignError : std::runtime_error {
    explicit DesignError(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration (unknown keys, invalid ranges, unwritable output).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace policysim
