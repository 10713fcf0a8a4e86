#pragma once

#include <stdexcept>
#include <string>

namespace hebbseed {

// Incompatible tensor shapes. Messages name both shapes involved.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument value (bad axis, rate out of range, unknown probe, ...).
class ArgumentError : public std::runtime_error {
public:
    explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or truncated input file.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace hebbseed
