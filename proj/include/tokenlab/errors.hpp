#pragma once

#include <stdexcept>
#include <string>

namespace tokenlab {

// Every failure mode in the library throws Error with a machine-checkable
// code and a human-readable message. The CLI maps codes to exit status.
enum class ErrorCode {
    dimension_mismatch,   // shapes/dims disagree (volumes, matrices, paths)
    invalid_ratio,        // masking ratio produces an empty or full mask
    invalid_argument,     // precondition violation not covered elsewhere
    vocab_violation,      // token id outside [0, V)
    parse_error,          // malformed file content (carries line/offset)
    io_error,             // filesystem failure
    zero_probability,     // model assigned p=0 to an observed token
    invalid_context,      // target index inside the visible set
    non_finite,           // loss/gradient became NaN or infinite
    shape_mismatch,       // checkpoint kind/count disagrees with model
    singular_system,      // linear solve failed even after jitter
    no_convergence,       // iterative solver hit its iteration cap
    divergence,           // iterates exceeded the divergence bound
    enumeration_too_large,// joint enumeration beyond the K/V caps
    not_normalized,       // distribution does not sum to 1 within tolerance
    empty_input,          // empty corpus/list/volume where content is required
    config_error,         // bad or unknown configuration key/value
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::dimension_mismatch:    return "dimension_mismatch";
        case ErrorCode::invalid_ratio:         return "invalid_ratio";
        case ErrorCode::invalid_argument:      return "invalid_argument";
        case ErrorCode::vocab_violation:       return "vocab_violation";
        case ErrorCode::parse_error:           return "parse_error";
        case ErrorCode::io_error:              return "io_error";
        case ErrorCode::zero_probability:      return "zero_probability";
        case ErrorCode::invalid_context:       return "invalid_context";
        case ErrorCode::non_finite:            return "non_finite";
        case ErrorCode::shape_mismatch:        return "shape_mismatch";
        case ErrorCode::singular_system:       return "singular_system";
        case ErrorCode::no_convergence:        return "no_convergence";
        case ErrorCode::divergence:            return "divergence";
        case ErrorCode::enumeration_too_large: return "enumeration_too_large";
        case ErrorCode::not_normalized:        return "not_normalized";
        case ErrorCode::empty_input:           return "empty_input";
        case ErrorCode::config_error:          return "config_error";
    }
    return "unknown";
}

} // namespace tokenlab
