// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace surfsplat {

enum class ErrorCode {
    invalid_parameter,
    invalid_input,
    degenerate_splat,
    degenerate_triangle,
    load_error,
    io_error,
    alignment_failure,
    divergence,
};

const char* to_string(ErrorCode code);

/// All recoverable failures surface as this exception, tagged with a code
/// so callers (and tests) can distinguish failure classes.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_parameter: return "invalid parameter";
    case ErrorCode::invalid_input: return "invalid input";
    case ErrorCode::degenerate_splat: return "degenerate splat";
    case ErrorCode::degenerate_triangle: return "degenerate triangle";
    case ErrorCode::load_error: return "load error";
    case ErrorCode::io_error: return "io error";
    case ErrorCode::alignment_failure: return "alignment failure";
    case ErrorCode::divergence: return "divergence";
    }
    return "unknown error";
}

} // namespace surfsplat
