#pragma once

#include <stdexcept>
#include <string>

namespace ehat {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape/dimension mismatch between operands. Message names both shapes.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration value (bad rate, ratio sum, unknown key, ...).
struct ConfigError : Error {
    using Error::Error;
};

// A caller broke an operation's contract (non-scalar loss, fully masked
// row, wrong HARN variant, ...).
struct ContractError : Error {
    using Error::Error;
};

// Malformed external data (out-of-range token id, misaligned eval ids).
struct DataError : Error {
    using Error::Error;
};

// Non-finite value produced by a numeric op, or a diverged training run.
struct NumericError : Error {
    using Error::Error;
};

} // namespace ehat
