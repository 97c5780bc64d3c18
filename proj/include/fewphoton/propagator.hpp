// propagator.hpp - interaction-picture propagator matrix elements assembled
// from system Green's functions, and their action on few-photon wavepackets.
//
// Coordinates: an excitation at waveguide position x meets the system at
// time -x (green_time). Unpaired coordinates contribute only when their
// Green time lies in the half-open window (tau_lo, tau_hi]; consecutive
// windows therefore tile time without double counting. On a grid, the node
// at the largest x is also included when its Green time equals tau_lo, so an
// emission grid ending at x = 0 holds the limiting amplitude there.

#pragma once

#include "fewphoton/effective_evolution.hpp"
#include "fewphoton/green_function.hpp"
#include "fewphoton/system_model.hpp"

#include <compare>
#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace fewphoton {

inline double green_time(double x) noexcept { return -x; }

struct Coordinate {
    double x = 0.0;
    int channel = 0;
};

// One term of the pairing expansion: `pairs` holds (output slot, input slot)
// matches carrying delta(x'_a - x_b); the unpaired slots enter the Green's
// function. coefficient = (-i)^(M + N - 2k).
struct PairingTerm {
    int k = 0;
    std::vector<std::pair<int, int>> pairs;
    std::vector<int> unpaired_out;
    std::vector<int> unpaired_in;
    Complex coefficient = 1.0;
};

// All channel-compatible pairings between M output and N input slots.
std::vector<PairingTerm> enumerate_pairings(std::span<const int> out_channels, std::span<const int> in_channels);

struct DeltaTerm {
    std::vector<std::pair<int, int>> pairs;
    // coefficient * indicators * Green factor over the unpaired slots
    Complex factor = 0.0;
};

struct PropagatorElement {
    std::vector<DeltaTerm> delta_terms;
    Complex smooth_value = 0.0; // the k = 0 term
};

// <x'_1..x'_M; bra| U_I(tau_hi, tau_lo) |x_1..x_N; ket> split into symbolic
// delta terms and the smooth (fully unpaired) part.
PropagatorElement propagator_element(const SystemSpec& spec, std::span<const Coordinate> out,
                                     std::span<const Coordinate> in, int bra, int ket, double tau_lo,
                                     double tau_hi);

// ----------------------------------------------------------------------------
// Wavepackets

struct UniformGrid {
    double x_min = 0.0;
    double dx = 0.0;
    std::size_t n = 0;

    double x(std::size_t i) const noexcept { return x_min + static_cast<double>(i) * dx; }
    double x_max() const noexcept { return n == 0 ? x_min : x(n - 1); }
    // Composite trapezoid weight of node i.
    double weight(std::size_t i) const noexcept;

    static UniformGrid spanning(double x_lo, double x_hi, double dx_target);
};

struct SectorKey {
    int system = 0;
    std::vector<int> channels; // sorted channel multiset, one entry per photon

    int photons() const noexcept { return static_cast<int>(channels.size()); }
    auto operator<=>(const SectorKey&) const = default;
};

// Few-photon state: for each (system state, channel multiset) an amplitude on
// the full tensor grid, row-major with one axis per photon in channel order.
// Amplitudes are stored symmetric under exchange of equal-channel photons,
// and the norm is sum over sectors of integral |psi|^2 / prod_c m_c!.
class WavepacketState {
public:
    explicit WavepacketState(UniformGrid grid) : grid_(grid) {}

    static WavepacketState vacuum(UniformGrid grid, int system, Complex amplitude = 1.0);

    const UniformGrid& grid() const noexcept { return grid_; }
    void set_grid(UniformGrid grid) noexcept { grid_ = grid; }

    std::vector<Complex>& sector(const SectorKey& key);
    const std::vector<Complex>* find(const SectorKey& key) const;
    const std::map<SectorKey, std::vector<Complex>>& sectors() const noexcept { return sectors_; }

    int max_photons() const noexcept;
    std::size_t flat_index(std::span<const std::size_t> idx) const noexcept;
    // Average over exchanges of equal-channel coordinates in every sector.
    void symmetrize();

private:
    UniformGrid grid_;
    std::map<SectorKey, std::vector<Complex>> sectors_;
};

struct PropagationOptions {
    int n_max = 2;
    // Optional shared cache; must contain every Green time the call needs.
    const EvolutionCache* cache = nullptr;
};

// Applies U_I(tau_hi, tau_lo) to `state_in`. Delta terms copy input
// amplitudes through; smooth terms are trapezoid integrals over the input grid.
WavepacketState apply_propagator(const SystemSpec& spec, const WavepacketState& state_in, double tau_lo,
                                 double tau_hi, const PropagationOptions& options = {});

// Interaction picture -> Schroedinger picture at time tau: x -> x + tau.
WavepacketState to_schrodinger(const WavepacketState& state, double tau);

using SectorProbabilities = std::map<std::pair<int, int>, double>; // (photons, system) -> P

// P_{n, sigma}: trapezoid quadrature of |amplitude|^2 per sector. Throws
// GridTooCoarse when the step-doubling error estimate exceeds 1e-3 of the norm.
SectorProbabilities probabilities(const WavepacketState& state, bool check_resolution = true);

double total_probability(const SectorProbabilities& p);

// Grid [-tau, 0] with spacing close to dx_target that ends on both edges.
UniformGrid emission_grid(double tau, double dx_target);

// Mesh of Green times needed to propagate states on `grid` over each window.
std::vector<double> green_times(const UniformGrid& grid, std::span<const double> window_edges);

// U_I(tau, 0)|vac; initial> on emission_grid(tau, dx).
WavepacketState emission_state(const SystemSpec& spec, int initial, double tau, double dx, int n_max,
                               const EvolutionCache* cache = nullptr);

// Sector probabilities of U_I(tau, 0)|vac; initial> summed over channels,
// integrating |G|^2 over ordered emission times exactly through the nested
// no-jump evolution d(rho_n)/dt = -i H_eff rho_n + i rho_n H_eff^dagger
// + sum_mu L_mu rho_{n-1} L_mu^dagger.
SectorProbabilities emission_probabilities(const SystemSpec& spec, int initial, double tau, int n_max);

} // namespace fewphoton
