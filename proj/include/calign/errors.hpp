#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace calign {

// Base class for all toolkit failures. Catch this at command boundaries.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad configuration: unknown scripted fingerprint, missing files, invalid knobs.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed text from a backend. Carries the raw payload for debugging.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::string raw_payload = {})
        : Error(msg), raw(std::move(raw_payload)) {}
    std::string raw;
};

// Parsed fine but the value is outside its legal range.
class RangeError : public Error {
public:
    using Error::Error;
};

// Network-level failure. The only retryable error class.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& msg, int attempt = 1)
        : Error(msg), attempts(attempt) {}
    int attempts;
};

// All retry attempts failed; keeps every attempt's message.
class RetryExhaustedError : public Error {
public:
    RetryExhaustedError(const std::string& msg, std::vector<std::string> errors)
        : Error(msg), attempt_errors(std::move(errors)) {}
    std::vector<std::string> attempt_errors;
};

// Array/boundary dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Input violates a mathematical precondition (positive log-prob,
// unnormalized distribution, empty reduction).
class DomainError : public Error {
public:
    using Error::Error;
};

// Non-finite value where a finite one is required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Response text could not be split into reasoning steps.
class SegmentationError : public Error {
public:
    using Error::Error;
};

// Backend produced fewer parseable candidates than requested.
class GenerationShortfallError : public Error {
public:
    GenerationShortfallError(const std::string& msg, int got, int wanted)
        : Error(msg), produced(got), requested(wanted) {}
    int produced;
    int requested;
};

}  // namespace calign
