#pragma once

#include <stdexcept>
#include <string>

namespace orbsde {

/// Raised when a scenario or domain description violates one of the
/// documented admissibility rules (dimension mismatch, growth bounds,
/// obliqueness, switching-cost structure condition, ...).
/// The message names the violated rule; the CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an iteration fails to converge or a linear solve degenerates
/// (Picard cap exceeded, regression design matrix rank deficient, projection
/// iteration cap). The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace orbsde
