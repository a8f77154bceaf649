#pragma once

#include <stdexcept>
#include <string>

namespace vibes {

/// Invalid numeric parameter (cutoffs, band edges, rates, scales).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input file. Carries the 1-based offending line when known (0 otherwise).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Data violates a domain invariant (non-uniform sampling, missing bank entries, ...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fit did not produce usable estimates (separation, failed bootstrap, undefined JND).
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vibes
