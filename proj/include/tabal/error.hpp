#pragma once

#include <stdexcept>
#include <string>

namespace tabal {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data, metadata or configuration.
class DataError : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Failure talking to an external predictor server.
class ProtocolError : public Error {
public:
    using Error::Error;
};

}  // namespace tabal
