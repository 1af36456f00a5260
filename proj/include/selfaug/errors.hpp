#pragma once

#include <stdexcept>
#include <string>

namespace selfaug {

// Incompatible tensor shapes.
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Value outside an operation's mathematical domain (log of a non-positive number, NaN gradients, ...).
class NumericDomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Well-formed input that violates a data rule (unknown label, duplicate id).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace selfaug
