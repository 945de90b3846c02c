#pragma once

#include <stdexcept>
#include <string>

namespace sdcert {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method did not converge within its iteration cap.
class NumericalFailure : public Error {
public:
    using Error::Error;
};

/// The constants or matrix inequalities admit no solution.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// A file or document could not be parsed.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Parsed data violates a structural invariant. Carries the offending field path.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A user callback threw or returned non-finite output.
class CallbackError : public Error {
public:
    CallbackError(double time, const std::string& what)
        : Error("at t=" + std::to_string(time) + ": " + what), time_(time) {}

    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

/// Monte Carlo moments are zero or non-positive where a logarithm is needed.
class DegenerateEnsemble : public Error {
public:
    using Error::Error;
};

} // namespace sdcert
