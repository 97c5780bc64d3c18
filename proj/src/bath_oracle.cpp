#include "fewphoton/bath_oracle.hpp"

#include "fewphoton/effective_evolution.hpp"

#include <algorithm>
#include <cmath>

namespace fewphoton {

namespace {

int ipow(int base, int exp) {
    int r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

// Number of occupation patterns over `modes` modes, each holding at most
// `cutoff` photons, with at most `cap` photons in total.
double count_configs(double modes, int cutoff, int cap) {
    std::vector<double> ways(static_cast<std::size_t>(cap) + 1, 0.0);
    ways[0] = 1.0;
    for (double m = 0; m < modes; m += 1.0) {
        std::vector<double> next(ways.size(), 0.0);
        for (std::size_t total = 0; total < ways.size(); ++total) {
            for (int o = 0; o <= cutoff && total + static_cast<std::size_t>(o) < ways.size(); ++o) {
                next[total + static_cast<std::size_t>(o)] += ways[total];
            }
        }
        ways = std::move(next);
    }
    double s = 0.0;
    for (double w : ways) s += w;
    return s;
}

// Annihilator of mode `mu` on the local occupation basis
// index = s + S * sum_mu o_mu (c+1)^mu.
Matrix local_annihilator(int dim, int n_channels, int cutoff, int mu) {
    const int levels = cutoff + 1;
    const int occ_states = ipow(levels, n_channels);
    Matrix a = Matrix::Zero(dim * occ_states, dim * occ_states);
    const int stride = ipow(levels, mu);
    for (int occ = 0; occ < occ_states; ++occ) {
        const int o = (occ / stride) % levels;
        if (o == 0) continue;
        for (int s = 0; s < dim; ++s) a(s + dim * (occ - stride), s + dim * occ) = std::sqrt(static_cast<double>(o));
    }
    return a;
}

Matrix lift_system(const Matrix& op, int occ_states) {
    const int dim = static_cast<int>(op.rows());
    Matrix m = Matrix::Zero(dim * occ_states, dim * occ_states);
    for (int occ = 0; occ < occ_states; ++occ) m.block(dim * occ, dim * occ, dim, dim) = op;
    return m;
}

} // namespace

int LatticeBath::boundary_index(double t, ErrorKind kind) const {
    const double r = (t - t_origin) / dx;
    const double n = std::round(r);
    if (std::abs(r - n) > 1e-9 || n < 0 || n > n_bins) {
        throw Error(kind, "time " + std::to_string(t) + " is not a bin boundary of the lattice (dx=" +
                              std::to_string(dx) + ", origin=" + std::to_string(t_origin) + ")");
    }
    return static_cast<int>(n);
}

LatticeBath build_lattice(const SystemSpec& spec, double dx, int n_bins, int photon_cutoff, int max_total_photons,
                          double t_origin) {
    if (!(dx > 0.0)) throw Error(ErrorKind::invalid_argument, "bin width must be positive");
    if (n_bins < 0) throw Error(ErrorKind::invalid_argument, "bin count must be >= 0");
    if (photon_cutoff < 1 || photon_cutoff > 2) throw Error(ErrorKind::invalid_argument, "photon cutoff must be 1 or 2");

    const int dim = spec.dim();
    const int n_channels = spec.n_channels();
    const double modes = static_cast<double>(n_bins) * n_channels;
    LatticeBath lat{spec, dx, n_bins, photon_cutoff, max_total_photons, t_origin, 0, 0.0, 0.0, {}, {}};
    const int occ_states = ipow(photon_cutoff + 1, n_channels);
    lat.local_dim = dim * occ_states;
    lat.nominal_dimension = dim * std::pow(photon_cutoff + 1.0, modes);
    const int cap = max_total_photons < 0 ? static_cast<int>(std::min(modes * photon_cutoff, 64.0)) : max_total_photons;
    lat.effective_dimension = max_total_photons < 0 ? lat.nominal_dimension : dim * count_configs(modes, photon_cutoff, cap);
    if (lat.effective_dimension > oracle_dimension_guard) {
        throw Error(ErrorKind::dimension_guard_exceeded,
                    "composite dimension " + std::to_string(lat.effective_dimension) + " exceeds 2^24");
    }

    Matrix coupling = Matrix::Zero(lat.local_dim, lat.local_dim);
    const double g = 1.0 / std::sqrt(dx);
    for (int mu = 0; mu < n_channels; ++mu) {
        const Matrix a = local_annihilator(dim, n_channels, photon_cutoff, mu);
        const Matrix l = lift_system(spec.channel(mu), occ_states);
        // A and L act on different factors, so they commute.
        coupling += g * (a * l.adjoint() + l * a.adjoint());
    }
    const auto generator = [&](double t) -> Matrix {
        return Complex(0.0, -1.0) * (lift_system(spec.hamiltonian(t), occ_states) + coupling);
    };
    const bool constant = spec.drives_piecewise_constant();
    const auto breaks = spec.breakpoints();
    MagnusSettings settings;
    settings.base_step = std::min(settings.base_step, dx / 4.0);

    lat.steps.reserve(static_cast<std::size_t>(n_bins));
    lat.vacuum_blocks.reserve(static_cast<std::size_t>(n_bins));
    Matrix previous;
    bool previous_static = false;
    for (int n = 0; n < n_bins; ++n) {
        const double a = lat.boundary(n);
        const double b = lat.boundary(n + 1);
        std::vector<double> pts{a};
        for (double t : breaks) {
            if (t > a + time_match_tolerance(t) && t < b - time_match_tolerance(t)) pts.push_back(t);
        }
        pts.push_back(b);
        // Bins where H_sys is constant reuse the previous exponential.
        const bool is_static = constant && pts.size() == 2;
        Matrix u;
        if (n > 0 && is_static && previous_static &&
            (spec.hamiltonian(0.5 * (a + b)) - spec.hamiltonian(a - 0.5 * dx)).norm() == 0.0) {
            u = previous;
        } else {
            u = Matrix::Identity(lat.local_dim, lat.local_dim);
            for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
                u = time_ordered_exp(generator, pts[k], pts[k + 1], constant, settings) * u;
            }
        }
        previous = u;
        previous_static = is_static;
        lat.vacuum_blocks.push_back(u.topLeftCorner(dim, dim));
        lat.steps.push_back(std::move(u));
    }
    return lat;
}

std::size_t PhotonConfigHash::operator()(const PhotonConfig& c) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (std::uint32_t v : c) {
        h ^= v;
        h *= 1099511628211ull;
    }
    return h;
}

OracleState OracleState::vacuum(int dim, int system) {
    OracleState s;
    s.dim = dim;
    Vector v = Vector::Zero(dim);
    v(system) = 1.0;
    s.amplitudes.emplace(PhotonConfig{}, std::move(v));
    return s;
}

double OracleState::norm() const {
    double n = 0.0;
    for (const auto& [_, v] : amplitudes) n += v.squaredNorm();
    return n;
}

void oracle_evolve(const LatticeBath& lattice, OracleState& state, double t_from, double t_to) {
    const int first = lattice.boundary_index(t_from, ErrorKind::misaligned_interval);
    const int last = lattice.boundary_index(t_to, ErrorKind::misaligned_interval);
    if (last < first) throw Error(ErrorKind::reversed_interval, "oracle_evolve needs t_to >= t_from");
    if (state.dim != lattice.spec.dim()) throw Error(ErrorKind::dimension_mismatch, "state and lattice dimensions differ");

    const int dim = state.dim;
    const auto n_channels = static_cast<std::uint32_t>(lattice.spec.n_channels());
    const int levels = lattice.photon_cutoff + 1;
    const int occ_states = lattice.local_dim / dim;

    for (int n = first; n < last; ++n) {
        const auto bin = static_cast<std::uint32_t>(n);
        // Group configurations by everything outside the active bin.
        std::unordered_map<PhotonConfig, Vector, PhotonConfigHash> groups;
        for (auto& [config, amp] : state.amplitudes) {
            PhotonConfig rest;
            int occ = 0;
            for (std::uint32_t code : config) {
                if (code / n_channels == bin) {
                    occ += ipow(levels, static_cast<int>(code % n_channels));
                } else {
                    rest.push_back(code);
                }
            }
            auto [it, inserted] = groups.try_emplace(std::move(rest), Vector());
            if (inserted) it->second = Vector::Zero(lattice.local_dim);
            it->second.segment(dim * occ, dim) += amp;
        }
        std::unordered_map<PhotonConfig, Vector, PhotonConfigHash> next;
        next.reserve(groups.size() * 2);
        const Matrix& u = lattice.steps[static_cast<std::size_t>(n)];
        for (auto& [rest, local] : groups) {
            const Vector out = u * local;
            for (int occ = 0; occ < occ_states; ++occ) {
                const auto block = out.segment(dim * occ, dim);
                if (block.squaredNorm() == 0.0) continue;
                PhotonConfig config = rest;
                for (std::uint32_t mu = 0; mu < n_channels; ++mu) {
                    const int o = (occ / ipow(levels, static_cast<int>(mu))) % levels;
                    for (int k = 0; k < o; ++k) config.push_back(bin * n_channels + mu);
                }
                if (lattice.max_total_photons >= 0 && static_cast<int>(config.size()) > lattice.max_total_photons) {
                    state.truncated_norm += block.squaredNorm();
                    continue;
                }
                std::sort(config.begin(), config.end());
                auto [it, inserted] = next.try_emplace(std::move(config), Vector());
                if (inserted) {
                    it->second = block;
                } else {
                    it->second += block;
                }
            }
        }
        state.amplitudes = std::move(next);
    }
}

Complex oracle_green(const LatticeBath& lattice, const GreenQuery& query) {
    const SystemSpec& spec = lattice.spec;
    const int dim = spec.dim();
    if (query.bra < 0 || query.bra >= dim || query.ket < 0 || query.ket >= dim) {
        throw Error(ErrorKind::invalid_argument, "bra/ket index out of range");
    }
    const int lo = lattice.boundary_index(query.window_lo, ErrorKind::misaligned_interval);
    const int hi = lattice.boundary_index(query.window_hi, ErrorKind::misaligned_interval);
    if (hi < lo) throw Error(ErrorKind::reversed_interval, "green window has hi < lo");

    struct Op {
        int boundary;
        const Matrix* op;
        bool creation;
    };
    std::vector<Matrix> daggers;
    daggers.reserve(query.creations.size());
    std::vector<Op> ops;
    for (const auto& a : query.annihilations) {
        if (a.channel < 0 || a.channel >= spec.n_channels()) throw Error(ErrorKind::invalid_argument, "channel out of range");
        ops.push_back({lattice.boundary_index(a.time, ErrorKind::misaligned_insertion), &spec.channel(a.channel), false});
    }
    for (const auto& c : query.creations) {
        if (c.channel < 0 || c.channel >= spec.n_channels()) throw Error(ErrorKind::invalid_argument, "channel out of range");
        daggers.push_back(spec.channel(c.channel).adjoint());
        ops.push_back({lattice.boundary_index(c.time, ErrorKind::misaligned_insertion), &daggers.back(), true});
    }
    for (const auto& op : ops) {
        if (op.boundary < lo || op.boundary > hi) {
            throw Error(ErrorKind::time_outside_window, "insertion outside the query window");
        }
    }
    // Same chain order as green(): descending time, L left of L^dagger at ties.
    std::stable_sort(ops.begin(), ops.end(), [](const Op& x, const Op& y) {
        if (x.boundary != y.boundary) return x.boundary > y.boundary;
        return !x.creation && y.creation;
    });

    Vector v = Vector::Zero(dim);
    v(query.ket) = 1.0;
    auto next = ops.rbegin();
    for (int b = lo; b <= hi; ++b) {
        for (; next != ops.rend() && next->boundary == b; ++next) v = (*next->op) * v;
        if (b < hi) v = lattice.vacuum_blocks[static_cast<std::size_t>(b)] * v;
    }
    return v(query.bra);
}

SectorProbabilities oracle_emission_probabilities(const LatticeBath& lattice, int initial, double tau) {
    OracleState state = OracleState::vacuum(lattice.spec.dim(), initial);
    oracle_evolve(lattice, state, lattice.t_origin, tau);
    SectorProbabilities p;
    for (const auto& [config, amp] : state.amplitudes) {
        for (int s = 0; s < state.dim; ++s) p[{static_cast<int>(config.size()), s}] += std::norm(amp(s));
    }
    return p;
}

Complex richardson(std::span<const Complex> halving_sequence) {
    std::vector<Complex> t(halving_sequence.begin(), halving_sequence.end());
    if (t.empty()) throw Error(ErrorKind::invalid_argument, "richardson needs at least one value");
    // Level p removes the dx^p term: (2^p T_fine - T_coarse) / (2^p - 1).
    for (std::size_t p = 1; p < halving_sequence.size(); ++p) {
        const double f = std::ldexp(1.0, static_cast<int>(p));
        for (std::size_t i = t.size() - 1; i >= p; --i) t[i] = (f * t[i] - t[i - 1]) / (f - 1.0);
    }
    return t.back();
}

Complex oracle_green_extrapolated(const SystemSpec& spec, const GreenQuery& query, std::span<const double> spacings) {
    std::vector<Complex> values;
    for (double dx : spacings) {
        const double bins = (query.window_hi - query.window_lo) / dx;
        const auto n = static_cast<int>(std::round(bins));
        if (std::abs(bins - n) > 1e-9) throw Error(ErrorKind::misaligned_interval, "window is not a whole number of bins");
        const LatticeBath lat = build_lattice(spec, dx, n, 1, 0, query.window_lo);
        values.push_back(oracle_green(lat, query));
    }
    return richardson(values);
}

} // namespace fewphoton
