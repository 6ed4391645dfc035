#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gptrans {

// Machine-parsable failure category. The CLI prints it verbatim and maps it
// to an exit code.
enum class ErrorKind {
    Config,
    Input,
    Io,
    Checkpoint,
    Divergence,
    Unavailable,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Input: return "input";
    case ErrorKind::Io: return "io";
    case ErrorKind::Checkpoint: return "checkpoint";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Unavailable: return "unavailable";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(ErrorKind::Config, m) {}
};
struct InputError : Error {
    explicit InputError(const std::string& m) : Error(ErrorKind::Input, m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& m) : Error(ErrorKind::Checkpoint, m) {}
};

// Raised when a loss term turns non-finite; carries the offending term name.
struct DivergenceError : Error {
    DivergenceError(std::string term_name, const std::string& m)
        : Error(ErrorKind::Divergence, m), term(std::move(term_name)) {}
    std::string term;
};

struct UnavailableError : Error {
    explicit UnavailableError(const std::string& m) : Error(ErrorKind::Unavailable, m) {}
};

} // namespace gptrans
