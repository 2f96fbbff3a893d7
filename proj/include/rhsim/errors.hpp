#pragma once

#include <stdexcept>
#include <string>

namespace rhsim {

// Base class for all simulator errors.
struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration problems: bad geometry, infeasible schedules, missing files.
// The CLI maps these to exit code 2.
struct ConfigError : SimError {
    using SimError::SimError;
};

struct AddressError : SimError {
    using SimError::SimError;
};

struct TimingError : SimError {
    using SimError::SimError;
};

// RowClone across sub-array boundaries is not supported by the array.
struct UnsupportedCopyError : SimError {
    using SimError::SimError;
};

// Raised when a handle lacks the permission for an operation.
struct PermissionError : SimError {
    using SimError::SimError;
};

struct ShapeError : SimError {
    using SimError::SimError;
};

struct FileFormatError : SimError {
    using SimError::SimError;
};

// Bit search ran out of eligible bits before meeting its stop criterion.
struct ExhaustedError : SimError {
    using SimError::SimError;
};

// A plan budget exceeds the number of available bits.
struct BudgetError : SimError {
    using SimError::SimError;
};

struct DivisionError : SimError {
    using SimError::SimError;
};

}  // namespace rhsim
