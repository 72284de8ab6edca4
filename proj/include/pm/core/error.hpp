#pragma once

#include <stdexcept>
#include <string>

namespace pm {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or unreadable input: missing file, undecodable image, malformed dump.
class InputError : public Error {
public:
    using Error::Error;
};

/// Caller violated an operation's precondition (ranges, sizes, coordinates).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A user constraint cannot be satisfied. `label()` is nonzero when a specific
/// label of a label mask is at fault.
class ConstraintError : public Error {
public:
    explicit ConstraintError(const std::string& what, int label = 0)
        : Error(what), label_(label) {}
    int label() const noexcept { return label_; }

private:
    int label_;
};

}  // namespace pm
