#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace teamfuse {

// Base of every error raised by the library. The CLI maps the subclasses
// below onto exit codes, so new failure modes should derive from one of them.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text (bad CSV row, unparsable number, bad JSON).
class ParseError : public Error {
public:
    using Error::Error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Invalid configuration or model parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Invalid argument to a numeric routine (out-of-range value, width mismatch).
class InputError : public Error {
public:
    using Error::Error;
};

// Model fitting could not proceed (degenerate training data).
class FitError : public Error {
public:
    using Error::Error;
};

using WarningHandler = std::function<void(std::string_view)>;

// Installs a process-wide sink for non-fatal warnings and returns the old one.
// The default handler writes "warning: <msg>" to stderr.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(std::string_view message);

// Drops warnings raised on the current thread while alive.
class QuietWarnings {
public:
    QuietWarnings();
    ~QuietWarnings();
    QuietWarnings(const QuietWarnings&) = delete;
    QuietWarnings& operator=(const QuietWarnings&) = delete;
};

}  // namespace teamfuse
