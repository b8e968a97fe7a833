#pragma once

#include <stdexcept>
#include <string>

namespace tpool {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents do not line up (matmul inner dims, bias width, ...).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// Invalid configuration value (negative extents, p >= 1, infeasible budget, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// API misuse: non-scalar loss, re-running a consumed graph, masking the
// classification position, nondeterministic function under grad_check.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

// Dataset container format problems, one class per failure mode.
class DataFormatError : public Error {
public:
    explicit DataFormatError(const std::string& msg) : Error("format error: " + msg) {}
};

class BadMagicError : public DataFormatError {
public:
    explicit BadMagicError(const std::string& msg) : DataFormatError("bad magic: " + msg) {}
};

class VersionError : public DataFormatError {
public:
    explicit VersionError(const std::string& msg) : DataFormatError("version mismatch: " + msg) {}
};

class TruncationError : public DataFormatError {
public:
    explicit TruncationError(const std::string& msg) : DataFormatError("truncated: " + msg) {}
};

}  // namespace tpool
