#pragma once

#include <stdexcept>
#include <string>

namespace dfl {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- data ingestion ---

class MissingValueError : public Error {
public:
    MissingValueError(const std::string& msg, std::size_t row, std::size_t col)
        : Error(msg), row(row), col(col) {}
    std::size_t row;  // 0-based data row
    std::size_t col;  // 0-based asset column
};

class MalformedRowError : public Error {
public:
    using Error::Error;
};

class NonMonotoneDatesError : public Error {
public:
    using Error::Error;
};

class InsufficientHistoryError : public Error {
public:
    using Error::Error;
};

class DegenerateWindowError : public Error {
public:
    using Error::Error;
};

// --- linear algebra / solver ---

class NotPositiveDefiniteError : public Error {
public:
    using Error::Error;
};

class NumericalFailureError : public Error {
public:
    using Error::Error;
};

class NonConvergenceError : public Error {
public:
    using Error::Error;
};

class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

class DegenerateActiveSetError : public Error {
public:
    using Error::Error;
};

// --- model ---

class ShapeMismatchError : public Error {
public:
    using Error::Error;
};

class TapeMismatchError : public Error {
public:
    using Error::Error;
};

class NonFiniteLossError : public Error {
public:
    using Error::Error;
};

// --- metrics ---

class ZeroVolatilityError : public Error {
public:
    using Error::Error;
};

class TotalLossError : public Error {
public:
    using Error::Error;
};

class ZeroVectorError : public Error {
public:
    using Error::Error;
};

class DegenerateBaselineError : public Error {
public:
    using Error::Error;
};

class DegenerateCrossSectionError : public Error {
public:
    using Error::Error;
};

}  // namespace dfl
