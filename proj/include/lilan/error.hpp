#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lilan {

/// Error categories. Each one maps to a distinct CLI exit code.
enum class ErrorKind {
    InvalidArchitecture,
    Shape,
    TapeMismatch,
    Domain,
    State,
    SolverFailure,
    Budget,
    Grid,
    CorruptMagic,
    VersionMismatch,
    ShapeInconsistency,
    CorruptPayload,
    Divergence,
    Config,
    UnknownName,
    MissingFile,
    Io,
};

[[nodiscard]] constexpr std::string_view error_category(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArchitecture: return "invalid-architecture";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::TapeMismatch: return "tape-mismatch";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::State: return "state";
        case ErrorKind::SolverFailure: return "solver-failure";
        case ErrorKind::Budget: return "budget";
        case ErrorKind::Grid: return "grid";
        case ErrorKind::CorruptMagic: return "corrupt-magic";
        case ErrorKind::VersionMismatch: return "version-mismatch";
        case ErrorKind::ShapeInconsistency: return "shape-inconsistency";
        case ErrorKind::CorruptPayload: return "corrupt-payload";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::Config: return "config";
        case ErrorKind::UnknownName: return "unknown-name";
        case ErrorKind::MissingFile: return "missing-file";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

/// Process exit code used by the CLI for a given category (0 is success, 1 is reserved).
[[nodiscard]] constexpr int exit_code(ErrorKind kind) noexcept {
    return 10 + static_cast<int>(kind);
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::string_view category() const noexcept { return error_category(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace lilan
