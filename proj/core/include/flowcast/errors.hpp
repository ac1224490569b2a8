#pragma once

#include <stdexcept>
#include <string>

namespace flowcast {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf surfaced in a computed value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration, detected before any work starts.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation requires a non-empty input.
class EmptyInputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Filesystem failure (open, read, write, rename).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents: bad magic, unsupported version, truncation.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Correlation of a constant vector.
class UndefinedCorrelationError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A data-loader worker failed; raised on the consumer side.
class StreamError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace flowcast
