// scattering.hpp - scattering-matrix elements between ground states and their
// action on single-photon wavepackets.
//
// Scattering coordinates follow the propagator convention: a photon at x
// meets the system at time -x. Ground-state phases accumulated before 0 and
// after the end of the drive are dropped.

#pragma once

#include "fewphoton/propagator.hpp"
#include "fewphoton/system_model.hpp"

#include <vector>

namespace fewphoton {

struct ScatterQuery {
    std::vector<Coordinate> out;
    std::vector<Coordinate> in;
    int g_m = 0; // outgoing ground state
    int g_n = 0; // incoming ground state
};

// Same pairing structure as propagator_element, Green factors from
// green_scattering. Throws NotGroundState for excited indices.
PropagatorElement scattering_element(const SystemSpec& spec, const ScatterQuery& query);

struct GaussianPacket {
    double delta0 = 0.0; // center detuning
    double width = 2.0;  // spatial width Delta x
    double x0 = 0.0;     // center position
    int channel = 0;

    // (pi Dx^2)^(-1/4) exp(-(x - x0)^2 / (2 Dx^2) + i delta0 x)
    Complex operator()(double x) const;
};

struct TransmissionOptions {
    int out_channel = 1;
    int g_out = -1;              // outgoing ground state; -1 means same as incoming
    int g_in = -1;               // incoming ground state; -1 means first ground state
    double dx = 0.02;            // grid spacing target
    double packet_sigmas = 8.0;  // packet support half-width in units of width
    double tail_efolds = 30.0;   // decay e-folds kept behind the packet
    bool check_resolution = true;
};

struct TransmissionResult {
    UniformGrid grid;
    std::vector<Complex> psi_out; // single-photon amplitude in out_channel, ground state g_out
    double transmission = 0.0;    // integral of |psi_out|^2
    // 1 minus the single-photon norm over all channels and ground states:
    // weight carried off by multi-photon and system-excited components.
    double discarded = 0.0;
};

// psi_out(x') = int Sigma({x', out}, {x, in}) psi_in(x) dx on a uniform grid,
// evaluated in O(n) by running the chain recursively along the grid.
TransmissionResult transmit_wavepacket(const SystemSpec& spec, const GaussianPacket& packet,
                                       const TransmissionOptions& options = {});

// Single-photon plane-wave amplitude for an undriven spec:
// t = delta_{mu mu'} delta_{mn} + i <g_m| L_mu' (H_eff - eps_n - delta)^(-1) L_mu^dagger |g_n>.
// Throws DrivenSpecUnsupported when the spec carries a non-vanishing drive.
Complex plane_wave_response(const SystemSpec& spec, double delta, int in_channel = 0, int out_channel = 1,
                            int g_n = -1, int g_m = -1);

} // namespace fewphoton
