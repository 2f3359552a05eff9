#pragma once

#include <stdexcept>
#include <string>

namespace nus {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A file was readable but its contents are not in an accepted format.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A weight archive does not match the declared network layout.
class WeightFormatError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Backend or run configuration is inconsistent (unknown layer, no weights, ...).
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied argument violates an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A partition request cannot produce a meaningful set of regions.
class DegeneratePartitionError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/// The optimizer produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(int iteration, const std::string& what)
        : Error(what), iteration_(iteration) {}

    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

}  // namespace nus
