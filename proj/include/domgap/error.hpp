#pragma once

#include <stdexcept>
#include <string>

namespace domgap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Input bytes do not follow the expected format (JSON, CSV, EMB1, image codecs).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numeric routine produced an undefined or non-finite result.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace domgap
