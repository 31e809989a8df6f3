#pragma once

#include <stdexcept>
#include <string>

namespace downbeat {

// Coarse error categories, aligned with the CLI exit codes.
enum class ErrorCode {
    Usage = 1,    // bad arguments, malformed config, precondition violation
    Missing = 2,  // file or resource not found / unreadable
    Pipeline = 3, // processing failure (format error, degenerate input, divergence)
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorCode::Usage, msg); }
inline Error missing_error(const std::string& msg) { return Error(ErrorCode::Missing, msg); }
inline Error pipeline_error(const std::string& msg) { return Error(ErrorCode::Pipeline, msg); }

} // namespace downbeat
