#pragma once

#include <stdexcept>
#include <string>

namespace stcnn {

// Error taxonomy shared by every module. All errors derive from Error so
// callers can catch the whole family at the CLI boundary.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or extent disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Malformed or inconsistent file content.
struct FormatError : Error {
    using Error::Error;
};

// Structurally valid input carrying unusable values (NaN, Inf, ...).
struct DataError : Error {
    using Error::Error;
};

// Invalid configuration (architecture constraints, spec parameters, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Iterative solver diverged or violated a monotonicity guarantee.
struct ConvergenceError : Error {
    using Error::Error;
};

// API misuse (backward on a non-scalar, mutating a graph intermediate, ...).
struct UsageError : Error {
    using Error::Error;
};

}  // namespace stcnn
