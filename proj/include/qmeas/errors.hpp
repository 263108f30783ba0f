#pragma once

#include <stdexcept>
#include <string>

namespace qmeas {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridMismatchError : Error {
    using Error::Error;
};
struct NormalizationError : Error {
    using Error::Error;
};
struct DegenerateStateError : Error {
    using Error::Error;
};
struct NumericalBlowupError : Error {
    using Error::Error;
};
struct TimeGridError : Error {
    using Error::Error;
};
struct SamplingError : Error {
    using Error::Error;
};
struct ResolutionError : Error {
    using Error::Error;
};
struct NullStateError : Error {
    using Error::Error;
};
struct SpecError : Error {
    using Error::Error;
};
struct BasisMismatchError : Error {
    using Error::Error;
};
struct ConsistencyError : Error {
    using Error::Error;
};
struct KrausNormalizationError : Error {
    using Error::Error;
};
struct KrausPositivityError : Error {
    using Error::Error;
};
struct ZeroProbabilityError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

} // namespace qmeas
