#pragma once

#include <stdexcept>
#include <string>

namespace postcon {

/// Base of every error raised by the library. The CLI maps these to exit code 3,
/// except ConfigError which maps to 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class UnsupportedCombination : public Error {
public:
    using Error::Error;
};

/// Point outside the compact domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A non-finite value came out of a user function; carries the offending node.
class EvaluationError : public Error {
public:
    EvaluationError(const std::string& what, std::size_t node_index)
        : Error(what), node_index_(node_index) {}
    std::size_t node_index() const noexcept { return node_index_; }

private:
    std::size_t node_index_;
};

class NotDifferentiable : public Error {
public:
    using Error::Error;
};

class IllConditionedKernel : public Error {
public:
    using Error::Error;
};

class InvalidModel : public Error {
public:
    using Error::Error;
};

/// Quadrature could not reach the requested tolerance.
class AccuracyError : public Error {
public:
    AccuracyError(const std::string& what, double achieved)
        : Error(what), achieved_(achieved) {}
    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

class GridTooNarrow : public Error {
public:
    using Error::Error;
};

class SamplerFailure : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace postcon
