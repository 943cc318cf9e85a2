#pragma once

#include <stdexcept>
#include <string>

namespace pcs {

// Error categories map 1:1 onto CLI exit codes so callers can dispatch
// without parsing messages.
enum class ErrorCode {
    validation,   // bad config, bad arguments, bounds violations
    dimension,    // operands built over different spaces
    domain,       // math domain errors (negative order, negative argument)
    truncation,   // cutoff leak guard tripped, PCS tail too large
    integration,  // trace drift or stability guard failure inside a run
    numerical,    // nonfinite amplitudes, degenerate jump application
    io,           // file system failures
};

class SimError : public std::runtime_error {
public:
    SimError(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    const char* category() const noexcept {
        switch (code_) {
            case ErrorCode::validation: return "validation";
            case ErrorCode::dimension: return "dimension";
            case ErrorCode::domain: return "domain";
            case ErrorCode::truncation: return "truncation";
            case ErrorCode::integration: return "integration";
            case ErrorCode::numerical: return "numerical";
            case ErrorCode::io: return "io";
        }
        return "unknown";
    }

    int exit_code() const noexcept {
        switch (code_) {
            case ErrorCode::validation:
            case ErrorCode::dimension:
            case ErrorCode::domain: return 2;
            case ErrorCode::integration: return 3;
            case ErrorCode::truncation: return 4;
            case ErrorCode::io: return 5;
            case ErrorCode::numerical: return 6;
        }
        return 1;
    }

private:
    ErrorCode code_;
};

}  // namespace pcs
