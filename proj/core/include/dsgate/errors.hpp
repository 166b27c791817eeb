#pragma once

#include <stdexcept>
#include <string>

namespace dsgate {

// Extent/shape mismatch between tensors. Messages name both shapes.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Value outside the mathematical domain of an operation (T <= 0, degenerate range).
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (bad magic, truncation, extent overflow). Messages
// carry the byte offset where parsing failed.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent module configuration (group map gaps, C' mismatch, bad flags).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A function under evaluation produced a non-finite value.
class EvalError : public std::runtime_error {
public:
    explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dsgate
