#pragma once

#include <stdexcept>
#include <string>

namespace sobn {

/// Bad graph or table layout (cycles, domain mismatches, malformed files).
struct StructureError : std::runtime_error {
    explicit StructureError(const std::string& what) : std::runtime_error(what) {}
};

/// Caller passed an out-of-range or inconsistent argument.
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical failure: singular information matrix, zero-support evidence, underflow.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace sobn
