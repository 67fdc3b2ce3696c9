#pragma once

#include <stdexcept>
#include <string>

namespace igsc {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered, or an optimization diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Caller violated a precondition (empty candidate set, missing split, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

/// A file does not follow its binary/JSON layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Well-formed data that breaks a dataset or config invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace igsc
