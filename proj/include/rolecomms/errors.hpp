#pragma once

#include <stdexcept>
#include <string>

namespace rolecomms {

// Every library failure derives from Error so callers can catch one type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgumentError : Error {
    using Error::Error;
};

// Wrong matrix or vector shape.
struct DimensionError : ArgumentError {
    using ArgumentError::ArgumentError;
};

// Root finder called on an interval without a sign change.
struct BracketError : ArgumentError {
    using ArgumentError::ArgumentError;
};

// An iterative method did not converge within its cap.
struct NumericError : Error {
    using Error::Error;
};

// A gain that has to be inverted is zero.
struct SingularityError : Error {
    using Error::Error;
};

// Controllability / Riccati failures.
struct AnalysisError : Error {
    using Error::Error;
};

// Observed action has zero likelihood under the partner model.
struct InconsistencyError : Error {
    using Error::Error;
};

struct GenerationError : Error {
    using Error::Error;
};

struct ComparisonError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace rolecomms
