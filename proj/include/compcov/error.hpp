#pragma once

#include <stdexcept>
#include <string>

namespace compcov {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed user data: zero or negative compositions, bad counts, shape
/// mismatches in files.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Arguments outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Failures of the numerical machinery (eigensolver, backtracking, NaN).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace compcov
