#pragma once

#include <stdexcept>
#include <string>

namespace qsdc {

// A value violated a structural invariant (e.g. a density matrix that is not
// Hermitian, or an illegal phase transition).
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// An argument was outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The wavelength grid cannot host the requested network.
class CapacityExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qsdc
