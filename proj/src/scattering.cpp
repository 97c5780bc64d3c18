#include "fewphoton/scattering.hpp"

#include "fewphoton/effective_evolution.hpp"
#include "fewphoton/errors.hpp"
#include "fewphoton/green_function.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fewphoton {

PropagatorElement scattering_element(const SystemSpec& spec, const ScatterQuery& query) {
    std::vector<int> out_ch, in_ch;
    for (const auto& c : query.out) out_ch.push_back(c.channel);
    for (const auto& c : query.in) in_ch.push_back(c.channel);

    PropagatorElement element;
    for (const auto& term : enumerate_pairings(out_ch, in_ch)) {
        std::vector<Insertion> ann, cre;
        for (int a : term.unpaired_out) {
            const auto& c = query.out[static_cast<std::size_t>(a)];
            ann.push_back({green_time(c.x), c.channel});
        }
        for (int b : term.unpaired_in) {
            const auto& c = query.in[static_cast<std::size_t>(b)];
            cre.push_back({green_time(c.x), c.channel});
        }
        const Complex value = term.coefficient * green_scattering(spec, ann, cre, query.g_m, query.g_n);
        if (term.k == 0) {
            element.smooth_value = value;
        } else {
            element.delta_terms.push_back({term.pairs, value});
        }
    }
    return element;
}

Complex GaussianPacket::operator()(double x) const {
    const double norm = std::pow(std::numbers::pi * width * width, -0.25);
    const double u = (x - x0) / width;
    return norm * std::exp(Complex(-0.5 * u * u, delta0 * x));
}

namespace {

struct Grounds {
    int g_in;
    int g_out;
    StateClassification states;
};

Grounds resolve_grounds(const SystemSpec& spec, int g_in, int g_out) {
    Grounds r{g_in, g_out, classify_states(spec)};
    if (r.g_in < 0) r.g_in = r.states.ground_indices.front();
    if (r.g_out < 0) r.g_out = r.g_in;
    for (int g : {r.g_in, r.g_out}) {
        if (!r.states.is_ground(g)) {
            throw Error(ErrorKind::not_ground_state, "index " + std::to_string(g) + " is not a ground state");
        }
    }
    return r;
}

void check_channel(const SystemSpec& spec, int mu) {
    if (mu < 0 || mu >= spec.n_channels()) {
        throw Error(ErrorKind::invalid_argument, "channel " + std::to_string(mu) + " out of range");
    }
}

// Slowest nonzero amplitude decay rate of the undriven effective evolution.
double slowest_decay(const SystemSpec& spec) {
    Eigen::ComplexEigenSolver<Matrix> es(h_eff_static(spec), false);
    double slowest = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double rate = -es.eigenvalues()(i).imag();
        if (rate > 1e-12 && (slowest == 0.0 || rate < slowest)) slowest = rate;
    }
    return slowest;
}

} // namespace

TransmissionResult transmit_wavepacket(const SystemSpec& spec, const GaussianPacket& packet,
                                       const TransmissionOptions& options) {
    if (!(packet.width > 0.0)) throw Error(ErrorKind::invalid_argument, "packet width must be positive");
    check_channel(spec, packet.channel);
    check_channel(spec, options.out_channel);
    const Grounds grounds = resolve_grounds(spec, options.g_in, options.g_out);

    double t_pulse = 0.0;
    if (spec.driven()) {
        const auto [lo, hi] = spec.drive_support();
        if (lo < -time_match_tolerance(lo)) {
            throw Error(ErrorKind::invalid_argument, "scattering needs the drive to vanish for t < 0");
        }
        t_pulse = std::max(0.0, hi);
    }
    const double kappa = slowest_decay(spec);
    const double tail = kappa > 0.0 ? std::min(options.tail_efolds / kappa, 1e4) : 0.0;
    const double half = options.packet_sigmas * packet.width;
    const double x_hi = std::max(packet.x0 + half, 0.0);
    const double x_lo = std::min(packet.x0 - half, -t_pulse) - tail;

    TransmissionResult result;
    result.grid = UniformGrid::spanning(x_lo, x_hi, options.dx);
    const UniformGrid& grid = result.grid;

    // Ascending time mesh: grid nodes plus 0 and T_P (and drive breakpoints).
    std::vector<double> times;
    times.reserve(grid.n + 2);
    for (std::size_t j = 0; j < grid.n; ++j) times.push_back(green_time(grid.x(j)));
    times.push_back(0.0);
    times.push_back(t_pulse);
    const EvolutionCache cache(spec, times);
    const auto& mesh = cache.mesh();
    const std::size_t K = mesh.size();

    std::vector<long> node_of(K, -1);
    for (std::size_t j = 0; j < grid.n; ++j) node_of[cache.index_of(green_time(grid.x(j)))] = static_cast<long>(j);
    std::vector<Complex> psi(K, 0.0);
    std::vector<double> w(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        if (node_of[k] < 0) continue;
        const auto j = static_cast<std::size_t>(node_of[k]);
        psi[k] = packet(grid.x(j));
        w[k] = grid.weight(j);
    }

    const std::size_t k_zero = cache.index_of(0.0);
    const std::size_t k_pulse = cache.index_of(t_pulse);
    const int dim = spec.dim();
    const int g_n = grounds.g_in;
    const double eps_n = grounds.states.energies[static_cast<std::size_t>(g_n)];

    // b_k: U_eff(t_k <- 0)|g_n>, or the ground phase before 0.
    std::vector<Vector> b(K, Vector::Zero(dim));
    for (std::size_t k = 0; k <= k_zero; ++k) b[k](g_n) = std::exp(Complex(0.0, -eps_n * mesh[k]));
    for (std::size_t k = k_zero + 1; k < K; ++k) b[k] = cache.step(k - 1) * b[k - 1];

    const Matrix l_in_dag = spec.channel(packet.channel).adjoint();

    // Forward sums W_k = sum_{j<k} w_j psi_j U(t_k <- t_j) L_in^dagger b_j.
    std::vector<Vector> forward(K, Vector::Zero(dim));
    for (std::size_t k = 1; k < K; ++k) {
        forward[k] = cache.step(k - 1) * (forward[k - 1] + w[k - 1] * psi[k - 1] * (l_in_dag * b[k - 1]));
    }

    const auto amplitude = [&](int g_m, int nu) {
        const double eps_m = grounds.states.energies[static_cast<std::size_t>(g_m)];
        std::vector<RowVector> a(K, RowVector::Zero(dim));
        for (std::size_t k = k_pulse; k < K; ++k) a[k](g_m) = std::exp(Complex(0.0, eps_m * (mesh[k] - t_pulse)));
        for (std::size_t k = k_pulse; k-- > 0;) a[k] = a[k + 1] * cache.step(k);

        const Matrix& l_out = spec.channel(nu);
        const Matrix tie = 0.5 * (l_out * l_in_dag + l_in_dag * l_out);
        std::vector<Complex> out(grid.n, 0.0);
        RowVector backward = RowVector::Zero(dim);
        for (std::size_t k = K; k-- > 0;) {
            if (k + 1 < K) backward = (backward + w[k + 1] * psi[k + 1] * (a[k + 1] * l_in_dag)) * cache.step(k);
            if (node_of[k] < 0) continue;
            // (-i)^2 from the two unpaired insertions.
            Complex v = -(a[k] * (l_out * forward[k]))(0);
            v -= (backward * (l_out * b[k]))(0);
            v -= w[k] * psi[k] * (a[k] * (tie * b[k]))(0);
            if (nu == packet.channel) v += a[k_zero](g_n) * psi[k];
            out[static_cast<std::size_t>(node_of[k])] = v;
        }
        return out;
    };

    const auto norm_of = [&](const std::vector<Complex>& f) {
        double s = 0.0;
        for (std::size_t j = 0; j < grid.n; ++j) s += grid.weight(j) * std::norm(f[j]);
        return s;
    };

    double single_photon = 0.0;
    for (int g_m : grounds.states.ground_indices) {
        for (int nu = 0; nu < spec.n_channels(); ++nu) {
            auto f = amplitude(g_m, nu);
            const double n = norm_of(f);
            single_photon += n;
            if (g_m == grounds.g_out && nu == options.out_channel) {
                result.transmission = n;
                result.psi_out = std::move(f);
            }
        }
    }
    result.discarded = 1.0 - single_photon;

    if (options.check_resolution && grid.n >= 3) {
        const std::size_t h = (grid.n - 1) / 2;
        double fine = 0.0, coarse = 0.0;
        for (std::size_t j = 0; j <= 2 * h; ++j) {
            const double e = (j == 0 || j == 2 * h) ? 0.5 : 1.0;
            fine += e * grid.dx * std::norm(result.psi_out[j]);
            if (j % 2 == 0) coarse += e * 2.0 * grid.dx * std::norm(result.psi_out[j]);
        }
        if (std::abs(fine - coarse) / 3.0 > 1e-3) {
            throw Error(ErrorKind::grid_too_coarse, "transmission quadrature error estimate " +
                                                        std::to_string(std::abs(fine - coarse) / 3.0) +
                                                        " exceeds 1e-3");
        }
    }
    return result;
}

Complex plane_wave_response(const SystemSpec& spec, double delta, int in_channel, int out_channel, int g_n, int g_m) {
    if (spec.driven()) {
        throw Error(ErrorKind::driven_spec_unsupported, "plane_wave_response needs an undriven spec");
    }
    check_channel(spec, in_channel);
    check_channel(spec, out_channel);
    const Grounds grounds = resolve_grounds(spec, g_n, g_m);
    const auto& excited = grounds.states.excited_indices;
    Complex t = (in_channel == out_channel && grounds.g_in == grounds.g_out) ? 1.0 : 0.0;
    if (excited.empty()) return t;

    // L^dagger|g_n> and <g_m|L live on the excited block, where H_eff is invertible
    // when every excited state decays.
    const auto ne = static_cast<Eigen::Index>(excited.size());
    const Matrix h = h_eff_static(spec);
    const double eps_n = grounds.states.energies[static_cast<std::size_t>(grounds.g_in)];
    Matrix block(ne, ne);
    Vector rhs(ne);
    RowVector lhs(ne);
    const Matrix& l_in = spec.channel(in_channel);
    const Matrix& l_out = spec.channel(out_channel);
    for (Eigen::Index a = 0; a < ne; ++a) {
        const int ia = excited[static_cast<std::size_t>(a)];
        for (Eigen::Index b = 0; b < ne; ++b) block(a, b) = h(ia, excited[static_cast<std::size_t>(b)]);
        block(a, a) -= eps_n + delta;
        rhs(a) = std::conj(l_in(grounds.g_in, ia));
        lhs(a) = l_out(grounds.g_out, ia);
    }
    Eigen::FullPivLU<Matrix> lu(block);
    if (!lu.isInvertible()) {
        throw Error(ErrorKind::invalid_argument, "excited block of H_eff is singular at this detuning");
    }
    t += Complex(0.0, 1.0) * (lhs * lu.solve(rhs))(0);
    return t;
}

} // namespace fewphoton
