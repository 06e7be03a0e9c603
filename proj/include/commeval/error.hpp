#pragma once

#include <stdexcept>
#include <string>

namespace commeval {

/// Caller violated a documented precondition (bad argument, bad flag).
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed input file. Carries the 1-based line number when known.
struct ParseError : std::runtime_error {
    ParseError(const std::string &what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
    std::size_t line;
};

/// Data parsed fine but breaks a type invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical input outside the domain of a formula.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// A correlation coefficient is undefined (zero variance, all ties).
struct UndefinedCorrelation : std::domain_error {
    using std::domain_error::domain_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace commeval
