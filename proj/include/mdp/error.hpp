#pragma once

#include <stdexcept>
#include <string>

namespace mdp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector/matrix/tensor extents that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated files, bad magic numbers, unsupported versions.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Zero pivots, NaN losses, solver failures that cannot be reported in-band.
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require_dims(bool ok, const std::string& what)
{
    if (!ok) {
        throw DimensionError(what);
    }
}

} // namespace detail
} // namespace mdp
