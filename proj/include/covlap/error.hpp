#pragma once

#include <stdexcept>
#include <string>

namespace covlap {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string& what = "matrix is not positive definite")
        : Error(what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what = "dimension mismatch") : Error(what) {}
};

/// A zero-constrained entry of a covariance matrix is nonzero.
class StructureViolation : public Error {
public:
    using Error::Error;
};

/// Quadratic form u of the column update was not strictly positive.
class NonpositiveU : public Error {
public:
    NonpositiveU(const std::string& what, double u) : Error(what), value(u) {}
    double value;
};

class InfeasibleModel : public Error {
public:
    using Error::Error;
};

class GenerationFailed : public Error {
public:
    using Error::Error;
};

class InsufficientClassCount : public Error {
public:
    using Error::Error;
};

class EmptyTestSet : public Error {
public:
    EmptyTestSet() : Error("test set is empty") {}
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line_no)
        : Error(what + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    std::size_t line;
};

}  // namespace covlap
