#ifndef NNPM_ERRORS_HPP
#define NNPM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace nnpm {

// Error taxonomy used across the library. Everything derives from Error so
// callers (and the C boundary) can catch one base type and still map the
// subclass to a status code.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes disagree with an operation's requirements.
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Caller-supplied data is invalid (bad waveform, bad index, bad label...).
struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(msg) {}
};

// Configuration value out of its legal domain.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Object used before it reached the required state.
struct StateError : Error {
    explicit StateError(const std::string& msg) : Error(msg) {}
};

// API contract broken by the caller (e.g. backward on a non-scalar).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace nnpm

#endif
