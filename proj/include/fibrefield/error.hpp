#pragma once

#include <stdexcept>
#include <string>

namespace fibrefield {

enum class ErrorKind {
    NonPositiveDefinite,
    DegenerateWeights,
    EmptyPattern,
    OutsideWindow,
    SingularStart,
    SingularField,
    InvalidAllocation,
    ZeroFibreLikelihood,
    TooShort,
    ZeroVariance,
    InvalidArgument,
    Config,
    Data,
};

/// Exception carrying a machine-readable kind; the CLI maps kinds to exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace fibrefield
