#pragma once

#include <stdexcept>
#include <string>

namespace fedssp {

// Base of every error the library raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite objective values, root finding that does not converge, etc.
class NumericalError : public Error {
public:
    using Error::Error;
};

// W + tD lost rank during QR retraction.
class RetractionError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Objective evaluated at a W that is off the orthonormal manifold.
class InfeasibleError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class RoundTimeoutError : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace fedssp
