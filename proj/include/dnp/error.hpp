#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace dnp {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or dimensionally inconsistent input data.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A parameter violates its admissible range. `key()` names the offending
/// configuration entry (dotted path) when one is known.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what, std::string key = {})
        : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Unsmoothed m-Laplacian with m < 2 evaluated at a vanishing gradient.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// An iterative solver stopped without meeting its tolerance.
class SolverFailure : public Error {
public:
    SolverFailure(const std::string& what, double residual)
        : Error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace dnp
