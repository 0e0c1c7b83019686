#pragma once

#include <stdexcept>
#include <string>

namespace knntest {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input: malformed data, out-of-domain parameters, mismatched sizes.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Too few points to form a graph.
class DegenerateInputError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A parameter outside the family's parameter space (e.g. a non-positive scale).
class ParameterDomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A neighbor schedule the threshold calculus cannot reason about.
class UnsupportedScheduleError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Numerical trouble: vanishing densities, zero variance, failed integration.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DegeneracyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Integration did not reach the requested accuracy. Carries what it got.
class ToleranceError : public NumericalError {
public:
    ToleranceError(const std::string& what, double partial, double std_error)
        : NumericalError(what), partial_estimate(partial), partial_std_error(std_error) {}

    double partial_estimate;
    double partial_std_error;
};

}  // namespace knntest
