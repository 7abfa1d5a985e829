#pragma once

#include <stdexcept>
#include <string>

namespace twrs {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct NotHermitian : Error {
    using Error::Error;
};

struct RankNotOne : Error {
    using Error::Error;
};

struct SingularNoise : Error {
    using Error::Error;
};

struct PreconditionViolated : Error {
    using Error::Error;
};

struct DegenerateDenominator : Error {
    using Error::Error;
};

struct NumericalFailure : Error {
    using Error::Error;
};

inline void require(bool cond, const char* what) {
    if (!cond) throw DimensionMismatch(what);
}

}  // namespace twrs
