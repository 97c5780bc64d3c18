// bath_oracle.hpp - brute-force validator built on a coarse-grained waveguide:
// the continuum is replaced by time bins of width dx holding one bosonic mode
// per channel, and each bin is stepped with the exact exponential of its local
// interaction Hamiltonian
//   H_sys(t) + (1/sqrt(dx)) sum_mu (A_mu[n] L_mu^dagger + L_mu A_mu[n]^dagger).
//
// Bin n covers [t_origin + n dx, t_origin + (n+1) dx). Only the bin passing
// the system is active, so a step acts on S * (cutoff+1)^N_L amplitudes at a
// time. Not a production simulator: tiny instances, test use only.

#pragma once

#include "fewphoton/errors.hpp"
#include "fewphoton/green_function.hpp"
#include "fewphoton/propagator.hpp"
#include "fewphoton/system_model.hpp"

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace fewphoton {

inline constexpr double oracle_dimension_guard = 16777216.0; // 2^24

struct LatticeBath {
    SystemSpec spec;
    double dx = 0.0;
    int n_bins = 0;
    int photon_cutoff = 1;      // per mode
    int max_total_photons = -1; // -1: no cap beyond the per-mode cutoff
    double t_origin = 0.0;
    int local_dim = 0;          // S * (cutoff+1)^N_L
    double nominal_dimension = 0.0;   // S * (cutoff+1)^(n_bins N_L)
    double effective_dimension = 0.0; // same, restricted to <= max_total_photons
    std::vector<Matrix> steps;        // bin-local propagators
    std::vector<Matrix> vacuum_blocks; // <vac| step |vac>, S x S

    double boundary(int n) const noexcept { return t_origin + n * dx; }
    // Boundary index of t; throws `kind` when t is not on a bin boundary.
    int boundary_index(double t, ErrorKind kind) const;
};

// Throws DimensionGuardExceeded when the effective composite dimension
// exceeds 2^24.
LatticeBath build_lattice(const SystemSpec& spec, double dx, int n_bins, int photon_cutoff = 1,
                          int max_total_photons = -1, double t_origin = 0.0);

// Photon configuration: sorted mode codes bin * N_L + channel, one entry per
// photon (repeated for multiple occupation).
using PhotonConfig = std::vector<std::uint32_t>;

struct PhotonConfigHash {
    std::size_t operator()(const PhotonConfig& c) const noexcept;
};

// Composite state stored over occupied photon configurations only.
struct OracleState {
    int dim = 0;
    std::unordered_map<PhotonConfig, Vector, PhotonConfigHash> amplitudes;
    double truncated_norm = 0.0; // weight dropped by the total-photon cap

    static OracleState vacuum(int dim, int system);
    double norm() const;
};

// Steps `state` through every bin between t_from and t_to (both on bin
// boundaries, else MisalignedInterval).
void oracle_evolve(const LatticeBath& lattice, OracleState& state, double t_from, double t_to);

// Discrete Green's function: chain of vacuum-projected bin propagators with
// the query's insertions placed at bin boundaries (else MisalignedInsertion).
Complex oracle_green(const LatticeBath& lattice, const GreenQuery& query);

// P_{n, sigma} of the composite state evolved from |vac; initial> at t_origin.
SectorProbabilities oracle_emission_probabilities(const LatticeBath& lattice, int initial, double tau);

// Extrapolates values computed at dx, dx/2, dx/4, ... assuming an error
// series in powers of dx.
Complex richardson(std::span<const Complex> halving_sequence);

// oracle_green at each spacing (halving sequence) on a lattice spanning the
// query window, followed by Richardson extrapolation.
Complex oracle_green_extrapolated(const SystemSpec& spec, const GreenQuery& query, std::span<const double> spacings);

} // namespace fewphoton
