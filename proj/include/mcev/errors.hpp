#pragma once

#include <stdexcept>
#include <string>

namespace mcev {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input text (bad token, ragged row).  Carries file/line context in the message.
struct ParseError : Error {
    using Error::Error;
};

/// Structurally valid input that violates a contract (non-positive weight, too few rows, ...).
struct ValidationError : Error {
    using Error::Error;
};

/// Non-finite intermediate, failed decomposition, or other numeric breakdown.
struct NumericError : Error {
    using Error::Error;
};

} // namespace mcev
