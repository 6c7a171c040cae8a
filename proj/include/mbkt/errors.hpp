// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <stdexcept>
#include <string>

namespace mbkt {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or axis disagreement between operands.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

/// Invalid or inconsistent run configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Non-finite values or other numeric failures.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

/// Malformed or incompatible serialized artifacts (checkpoints).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// Dataset file problems; carries a 1-based line number when known.
class DataError : public Error {
public:
    explicit DataError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

/// Runtime toggle for NaN/Inf scanning after every forward op. Off by
/// default so hot loops stay branch-light; tests and the CLI flip it on.
inline bool& debug_checks() {
    static bool enabled = false;
    return enabled;
}

}  // namespace mbkt
