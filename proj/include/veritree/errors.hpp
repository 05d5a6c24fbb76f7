#pragma once

#include <stdexcept>
#include <string>

namespace veritree {

/// Malformed input document (bad syntax, wrong field type). Carries a
/// human-readable location where available.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structurally well-formed input that violates a domain invariant
/// (duplicate ids, cycles, empty claim text, ...).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Inconsistent or out-of-range configuration (dimension mismatch,
/// bad ratios, head count not dividing 2h, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape incompatibility; message names the op and the shapes.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Requested data is absent or unusable (unknown thread id, empty split,
/// missing gradients, unreadable file).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace veritree
