#pragma once

#include <stdexcept>
#include <string>

namespace mgcn {

/// Invalid parameters or flag combinations (maps to CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file could not be parsed under its declared format.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed data violates a domain invariant (non-finite value, duplicate index, ...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch, const std::string& what)
        : std::runtime_error(what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace mgcn
