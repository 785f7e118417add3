#pragma once

#include <stdexcept>
#include <string>

namespace abms {

/// Filesystem or OS-level failure. The message carries the path involved.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (config XML, snapshot, scenario).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bandwidth policy that cannot be honoured (zero floor, zero users).
class InvalidPolicy : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace abms
