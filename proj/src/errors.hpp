#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace msplit {

/// Base for every error raised by the solver core.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition (dimension mismatch etc).
class UsageError : public Error {
public:
    using Error::Error;
};

/// A configuration value is invalid. `field()` names the offending knob.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field))
    {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class SingularMatrixError : public Error {
public:
    explicit SingularMatrixError(std::size_t pivot)
        : Error("matrix is singular to working precision at pivot " +
                std::to_string(pivot)),
          pivot_(pivot)
    {}
    std::size_t pivot() const noexcept { return pivot_; }

private:
    std::size_t pivot_;
};

/// Raised when the relative residual is requested for a zero right-hand side.
class ZeroRhsError : public Error {
public:
    ZeroRhsError() : Error("relative residual undefined: ||b|| == 0") {}
};

/// Inner solver breakdown surfaced by the outer driver.
class BreakdownError : public Error {
public:
    BreakdownError(std::size_t block, std::size_t outer_iteration,
                   const std::string& what)
        : Error("block " + std::to_string(block) + " breakdown at outer iteration " +
                std::to_string(outer_iteration) + ": " + what),
          block_(block)
    {}
    std::size_t block() const noexcept { return block_; }

private:
    std::size_t block_;
};

/// Communication protocol violation (deadlock, mismatched collectives).
class ProtocolError : public Error {
public:
    using Error::Error;
};

}  // namespace msplit
