#pragma once

#include <stdexcept>
#include <string>

namespace autofocus {

// Precondition violations on public operations.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ParseErrorKind {
    no_coordinate,
    multiple_coordinates,
    alignment_failure,
};

inline const char* to_string(ParseErrorKind kind) {
    switch (kind) {
        case ParseErrorKind::no_coordinate: return "no-coordinate-found";
        case ParseErrorKind::multiple_coordinates: return "multiple-coordinates-found";
        case ParseErrorKind::alignment_failure: return "token-alignment-failure";
    }
    return "unknown";
}

class ParseError : public std::runtime_error {
public:
    ParseError(ParseErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

    ParseErrorKind kind() const noexcept { return kind_; }

private:
    ParseErrorKind kind_;
};

// Network or HTTP-level failure talking to a backend. Retryable.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Backend is reachable but unusable as configured (e.g. hides log-probabilities).
class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Grounding failed after the retry budget was spent.
class GroundingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace autofocus
