#pragma once

#include <stdexcept>
#include <string>

namespace mclforge {

// Base class for every error this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up (matmul inner dims, elementwise mismatch, ...).
struct ShapeError : Error {
    using Error::Error;
};

// Mathematical domain violation (log of non-positive value, T <= 0, ...).
struct DomainError : Error {
    using Error::Error;
};

// A caller broke a documented precondition (non-scalar loss, label out of
// range, missing grads before an optimizer step, ...).
struct ContractError : Error {
    using Error::Error;
};

// Invalid configuration value (bad layer sizes, lambda outside [0,1], ...).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input file. Carries the byte offset (binary formats) or the
// line number (text formats) where parsing stopped.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t where)
        : Error(msg), position(where) {}
    std::size_t position;
};

// Filesystem-level failure (missing file, short write, ...).
struct IoError : Error {
    using Error::Error;
};

}  // namespace mclforge
