#pragma once

#include <stdexcept>
#include <string>

namespace prefgen {

// invalid configuration or argument surfaced to the CLI as exit code 2
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// a required checkpoint artifact is absent (exit code 3)
struct MissingCheckpointError : std::runtime_error {
    explicit MissingCheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// runtime numerical failure, e.g. non-finite training loss (exit code 4)
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace prefgen
