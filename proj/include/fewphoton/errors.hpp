#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fewphoton {

enum class ErrorKind {
    invalid_argument,
    dimension_mismatch,
    non_hermitian_hamiltonian,
    negative_rate,
    non_diagonal_static_hamiltonian,
    ambiguous_state,
    reversed_interval,
    time_outside_window,
    not_ground_state,
    grid_too_coarse,
    truncation_overflow,
    driven_spec_unsupported,
    dimension_guard_exceeded,
    misaligned_interval,
    misaligned_insertion,
    config_invalid,
};

std::string_view to_string(ErrorKind kind) noexcept;

// All engine failures carry a kind so callers (CLI, bindings, tests) can
// dispatch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::non_hermitian_hamiltonian: return "NonHermitianHamiltonian";
    case ErrorKind::negative_rate: return "NegativeRate";
    case ErrorKind::non_diagonal_static_hamiltonian: return "NonDiagonalStaticHamiltonian";
    case ErrorKind::ambiguous_state: return "AmbiguousState";
    case ErrorKind::reversed_interval: return "ReversedInterval";
    case ErrorKind::time_outside_window: return "TimeOutsideWindow";
    case ErrorKind::not_ground_state: return "NotGroundState";
    case ErrorKind::grid_too_coarse: return "GridTooCoarse";
    case ErrorKind::truncation_overflow: return "TruncationOverflow";
    case ErrorKind::driven_spec_unsupported: return "DrivenSpecUnsupported";
    case ErrorKind::dimension_guard_exceeded: return "DimensionGuardExceeded";
    case ErrorKind::misaligned_interval: return "MisalignedInterval";
    case ErrorKind::misaligned_insertion: return "MisalignedInsertion";
    case ErrorKind::config_invalid: return "ConfigInvalid";
    }
    return "Unknown";
}

} // namespace fewphoton
