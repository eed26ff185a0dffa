#pragma once

#include <stdexcept>
#include <string>

namespace battkit {

/// Base class for every error raised by the toolkit. `module()` names the
/// component that rejected the input so the CLI can report it.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

/// Precondition violated (non-positive capacity, dimension mismatch, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Input file lacks a mandatory column or uses an unknown layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Input parsed, but no usable row survived.
class EmptyInputError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Too few differential-curve bins survive masking.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// A named DVA/ICA feature could not be located on the curves.
class FeatureMissingError : public Error {
public:
    using Error::Error;
};

/// No feature correlates well enough with SOH to build a lookup table.
class CalibrationError : public Error {
public:
    using Error::Error;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

/// Normal equations stayed singular up to the maximum damping.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Explicit integrator diverged or the step violates the stability bound.
class StepSizeError : public Error {
public:
    using Error::Error;
};

} // namespace battkit
