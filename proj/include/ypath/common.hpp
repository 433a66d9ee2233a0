#pragma once

#include <stdexcept>
#include <string>

namespace ypath {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError -> 1, DataError/IndexError -> 2, TransportError/ProtocolError -> 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or incomplete configuration, unusable paths, invalid flags.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent data: corpora, benchmarks, metric misuse.
class DataError : public Error {
public:
    using Error::Error;
};

/// Index build/load failures and version mismatches.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Provider unreachable, timed out, or failing after all retries.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Provider reachable but the response violates the wire contract.
class ProtocolError : public Error {
public:
    using Error::Error;
};

}  // namespace ypath
