#pragma once

#include <stdexcept>
#include <string>

namespace pibsde {

// Root of the library's exception hierarchy. The CLI maps subclasses onto
// process exit codes (see tools/pibsde.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Model parameters violate a type invariant (non-PD covariance, kappa <= 0, ...).
class InvalidModel : public Error {
public:
    using Error::Error;
};

// Non-finite strategy input to the wealth recursion.
class InvalidStrategy : public Error {
public:
    using Error::Error;
};

// Overflow, filter collapse and other numerical breakdowns.
class NumericFailure : public Error {
public:
    using Error::Error;
};

// Caller broke an operation precondition (wrong regime, mismatched sizes).
class ContractViolation : public Error {
public:
    using Error::Error;
};

// Complex Riccati roots or finite-horizon blow-up: closed forms do not exist.
class UnstableRegime : public Error {
public:
    using Error::Error;
};

// A sufficient integrability condition failed and was not overridden.
class ConditionAbort : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(int line, const std::string& what)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    [[nodiscard]] int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace pibsde
