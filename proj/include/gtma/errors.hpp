#pragma once

#include <stdexcept>
#include <string>

namespace gtma {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A direction was required but the vector norm is below the zero threshold.
struct ZeroVectorError : Error {
    using Error::Error;
};

// Operands have incompatible dimensions.
struct DimMismatchError : Error {
    using Error::Error;
};

// NaN/Inf encountered, or an optimization left the finite domain.
struct NonFiniteError : Error {
    using Error::Error;
};

// Invalid or incomplete configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem or serialization failure.
struct IoError : Error {
    using Error::Error;
};

// Instance id not present in a fixture.
struct UnknownInstanceError : Error {
    using Error::Error;
};

// Dataset generation exceeded its rejection-sampling budget.
struct GenerationFailureError : Error {
    using Error::Error;
};

}  // namespace gtma
