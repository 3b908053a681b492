#pragma once

#include <stdexcept>
#include <string>

namespace nvca {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree with the operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A text or binary input could not be decoded.
class ParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace nvca
