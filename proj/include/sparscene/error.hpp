#pragma once

#include <stdexcept>
#include <string>

namespace sparscene {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape or dimension incompatibility.
struct ShapeError : Error {
    using Error::Error;
};

// A caller broke an operation's precondition (misaligned edge list,
// non-scalar objective, unknown agent kind, ...).
struct ContractError : Error {
    using Error::Error;
};

// Malformed scene data: dangling lane ids, degenerate polylines,
// unparseable JSON, bad masks.
struct DataError : Error {
    using Error::Error;
};

// Infeasible or inconsistent configuration values.
struct ConfigError : Error {
    using Error::Error;
};

// Checkpoint magic/version mismatch.
struct VersionError : Error {
    using Error::Error;
};

// NaN loss, divergence, or any numeric blow-up detected at runtime.
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace sparscene
