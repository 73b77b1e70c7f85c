#pragma once

#include <stdexcept>
#include <string>

namespace c2c {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed container or wire format (bad magic, out-of-range field).
struct FormatError : Error { using Error::Error; };
// Truncated payload or count mismatch.
struct LengthError : Error { using Error::Error; };
// Container version is newer/older than this build understands.
struct VersionError : Error { using Error::Error; };
// Payload does not match its stored checksum.
struct ChecksumError : Error { using Error::Error; };
// Operator received shape-incompatible tensors.
struct ShapeError : Error { using Error::Error; };
// Invalid argument value (k <= 0, epochs < 1, ...).
struct ArgumentError : Error { using Error::Error; };
// Dataset/config combination cannot be satisfied.
struct ConfigError : Error { using Error::Error; };
// NaN or non-finite value encountered in numeric code.
struct NumericError : Error { using Error::Error; };
// Filesystem problem (missing file, failed write).
struct IoError : Error { using Error::Error; };

} // namespace c2c
