#pragma once

#include <stdexcept>
#include <string>

namespace por {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad argument values: empty batches, out-of-range ratios, malformed labels.
struct InvalidInput : Error {
    using Error::Error;
};

// Dimension mismatch between tensors, weights or encodings.
struct ShapeError : Error {
    using Error::Error;
};

// A value violates its type invariants and cannot be canonically encoded.
struct EncodeError : Error {
    using Error::Error;
};

// Byte sequence does not parse as the expected canonical encoding.
struct DecodeError : Error {
    using Error::Error;
};

struct ChainError : Error {
    using Error::Error;
};

struct StorageError : Error {
    using Error::Error;
};

// Stored bytes do not hash to the digest they are filed under.
struct IntegrityError : Error {
    using Error::Error;
};

// Every participant in a round failed validation; nothing to aggregate.
struct EmptyConsensusError : Error {
    using Error::Error;
};

} // namespace por
