#pragma once

#include <stdexcept>
#include <string>

namespace spl {

/// Failure categories. The CLI maps them onto exit codes.
enum class ErrorKind {
    configuration,
    evaluation,
    geometry,
    consistency,
    singular_hit,
    degenerate,
    resolution,
    budget,
    sampling,
    wrong_scheme,
    io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::evaluation: return "evaluation error";
    case ErrorKind::geometry: return "geometry error";
    case ErrorKind::consistency: return "consistency error";
    case ErrorKind::singular_hit: return "singular hit";
    case ErrorKind::degenerate: return "degenerate input";
    case ErrorKind::resolution: return "resolution error";
    case ErrorKind::budget: return "budget exceeded";
    case ErrorKind::sampling: return "sampling error";
    case ErrorKind::wrong_scheme: return "wrong scheme";
    case ErrorKind::io: return "io error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) fail(kind, what);
}

} // namespace spl
