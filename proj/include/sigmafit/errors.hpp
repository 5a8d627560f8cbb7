#pragma once

#include <stdexcept>
#include <string>

namespace sigmafit {

// Input geometry does not determine a model (coincident/collinear points,
// rank-deficient design, ...).
struct DegenerateConfigurationError : std::runtime_error {
    explicit DegenerateConfigurationError(const std::string& what) : std::runtime_error(what) {}
};

// Residual is not defined for the queried point (e.g. both epipoles).
struct UndefinedResidualError : std::runtime_error {
    explicit UndefinedResidualError(const std::string& what) : std::runtime_error(what) {}
};

// Robust estimation could not produce any model.
struct EstimationFailureError : std::runtime_error {
    explicit EstimationFailureError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sigmafit
