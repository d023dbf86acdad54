#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ehmdp {

/// Base class of everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (e.g. h <= 0).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A caller broke a documented precondition (infeasible action, r > q, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Malformed model or run configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Enumerated state space larger than the configured limit.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Brute-force enumeration would exceed its policy cap.
class InstanceTooLarge : public Error {
public:
    using Error::Error;
};

/// An iterative solver hit its iteration cap.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, std::size_t iterations, double residual)
        : Error(what), iterations_(iterations), residual_(residual) {}

    std::size_t iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    std::size_t iterations_;
    double residual_;
};

/// The chain induced by a policy has more than one recurrent class.
class MultichainError : public Error {
public:
    MultichainError(const std::string& what, std::size_t recurrent_classes)
        : Error(what), classes_(recurrent_classes) {}

    std::size_t recurrent_classes() const { return classes_; }

private:
    std::size_t classes_;
};

/// The grid-power budget cannot be met even at the initial multiplier.
class InfeasibleBudget : public Error {
public:
    using Error::Error;
};

/// A policy was asked for an action at a state where it has none.
class UndefinedAction : public Error {
public:
    using Error::Error;
};

} // namespace ehmdp
