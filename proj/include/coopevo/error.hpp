#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coopevo {

enum class ErrorKind {
    InvalidArgument,
    NumericalDomain,
    PositivityFailure,
    NumericalBlowup,
    DegenerateState,
    ConfigParse,
    ConfigConflict,
    HypothesisFailure,
    GridMismatch,
    Io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NumericalDomain: return "numerical-domain";
    case ErrorKind::PositivityFailure: return "positivity-failure";
    case ErrorKind::NumericalBlowup: return "numerical-blowup";
    case ErrorKind::DegenerateState: return "degenerate-state";
    case ErrorKind::ConfigParse: return "config-parse";
    case ErrorKind::ConfigConflict: return "config-conflict";
    case ErrorKind::HypothesisFailure: return "hypothesis-failure";
    case ErrorKind::GridMismatch: return "grid-mismatch";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

/// Base exception for every failure raised by the library. The kind is what
/// callers branch on; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised when a density drops below the allowed undershoot.
class PositivityError : public Error {
public:
    PositivityError(std::size_t node, double value, double time)
        : Error(ErrorKind::PositivityFailure,
                "density " + std::to_string(value) + " at node " + std::to_string(node) +
                    " (t = " + std::to_string(time) + ")"),
          node_(node), value_(value) {}

    std::size_t node() const noexcept { return node_; }
    double value() const noexcept { return value_; }

private:
    std::size_t node_;
    double value_;
};

/// Raised by the config loader when a preset-forced field is overridden.
class ConfigConflictError : public Error {
public:
    explicit ConfigConflictError(std::string field, const std::string& detail)
        : Error(ErrorKind::ConfigConflict, field + ": " + detail), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace coopevo
