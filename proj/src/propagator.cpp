#include "fewphoton/propagator.hpp"

#include "fewphoton/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace fewphoton {

namespace {

Complex minus_i_power(int p) {
    switch (((p % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, -1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, 1.0};
    }
}

// Calls f(subset) for every k-subset of {0..n-1}, in lexicographic order.
template <class F>
void for_each_combination(int n, int k, F&& f) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    if (k > n) return;
    while (true) {
        f(std::as_const(idx));
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
        if (i < 0) return;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

// 1 / prod_c m_c! for a sorted channel multiset.
double multiplicity_weight(std::span<const int> channels) {
    double w = 1.0;
    for (std::size_t i = 0; i < channels.size();) {
        std::size_t j = i;
        while (j < channels.size() && channels[j] == channels[i]) ++j;
        w /= factorial(static_cast<int>(j - i));
        i = j;
    }
    return w;
}

bool in_window(double t, double lo, double hi) {
    return t > lo + time_match_tolerance(t) && t <= hi + time_match_tolerance(t);
}

std::size_t ipow(std::size_t base, int exp) {
    std::size_t r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

// Every sorted multiset of size m over {0..n_channels-1}.
std::vector<std::vector<int>> channel_multisets(int n_channels, int m) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(m), 0);
    if (m == 0) return {{}};
    while (true) {
        out.push_back(cur);
        int i = m - 1;
        while (i >= 0 && cur[static_cast<std::size_t>(i)] == n_channels - 1) --i;
        if (i < 0) break;
        ++cur[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < m; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(i)];
    }
    return out;
}

// Indices are canonical when non-decreasing inside every equal-channel run.
bool canonical(std::span<const std::size_t> idx, std::span<const int> channels) {
    for (std::size_t a = 1; a < idx.size(); ++a) {
        if (channels[a] == channels[a - 1] && idx[a] < idx[a - 1]) return false;
    }
    return true;
}

bool next_tuple(std::vector<std::size_t>& idx, std::size_t n) {
    for (std::size_t a = idx.size(); a-- > 0;) {
        if (++idx[a] < n) return true;
        idx[a] = 0;
    }
    return false;
}

// Calls f(permuted) for every arrangement of idx obtained by permuting
// positions within equal-channel runs.
template <class F>
void for_each_equivalent(std::span<const std::size_t> idx, std::span<const int> channels, F&& f) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t i = 0; i < channels.size();) {
        std::size_t j = i;
        while (j < channels.size() && channels[j] == channels[i]) ++j;
        runs.emplace_back(i, j);
        i = j;
    }
    std::vector<std::size_t> cur(idx.begin(), idx.end());
    // Sort each run so next_permutation enumerates each distinct arrangement once.
    for (auto [a, b] : runs) std::sort(cur.begin() + static_cast<long>(a), cur.begin() + static_cast<long>(b));
    while (true) {
        f(std::as_const(cur));
        std::size_t r = 0;
        while (r < runs.size() && !std::next_permutation(cur.begin() + static_cast<long>(runs[r].first),
                                                         cur.begin() + static_cast<long>(runs[r].second))) {
            ++r;
        }
        if (r == runs.size()) return;
    }
}

} // namespace

// ----------------------------------------------------------------------------
// Pairings

std::vector<PairingTerm> enumerate_pairings(std::span<const int> out_channels, std::span<const int> in_channels) {
    const int m = static_cast<int>(out_channels.size());
    const int n = static_cast<int>(in_channels.size());
    std::vector<PairingTerm> terms;
    for (int k = 0; k <= std::min(m, n); ++k) {
        const Complex coefficient = minus_i_power(m + n - 2 * k);
        for_each_combination(n, k, [&](const std::vector<int>& in_subset) {
            for_each_combination(m, k, [&](const std::vector<int>& out_subset) {
                std::vector<int> perm = out_subset;
                do {
                    bool compatible = true;
                    for (int i = 0; i < k && compatible; ++i) {
                        compatible = out_channels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] ==
                                     in_channels[static_cast<std::size_t>(in_subset[static_cast<std::size_t>(i)])];
                    }
                    if (!compatible) continue;
                    PairingTerm t;
                    t.k = k;
                    t.coefficient = coefficient;
                    for (int i = 0; i < k; ++i) {
                        t.pairs.emplace_back(perm[static_cast<std::size_t>(i)], in_subset[static_cast<std::size_t>(i)]);
                    }
                    for (int a = 0; a < m; ++a) {
                        if (std::find(out_subset.begin(), out_subset.end(), a) == out_subset.end()) {
                            t.unpaired_out.push_back(a);
                        }
                    }
                    for (int b = 0; b < n; ++b) {
                        if (std::find(in_subset.begin(), in_subset.end(), b) == in_subset.end()) {
                            t.unpaired_in.push_back(b);
                        }
                    }
                    terms.push_back(std::move(t));
                } while (std::next_permutation(perm.begin(), perm.end()));
            });
        });
    }
    return terms;
}

PropagatorElement propagator_element(const SystemSpec& spec, std::span<const Coordinate> out,
                                     std::span<const Coordinate> in, int bra, int ket, double tau_lo,
                                     double tau_hi) {
    if (!(tau_hi > tau_lo)) throw Error(ErrorKind::reversed_interval, "propagator_element needs tau_lo < tau_hi");
    std::vector<int> out_ch, in_ch;
    for (const auto& c : out) out_ch.push_back(c.channel);
    for (const auto& c : in) in_ch.push_back(c.channel);

    PropagatorElement element;
    for (const auto& term : enumerate_pairings(out_ch, in_ch)) {
        GreenQuery q;
        q.bra = bra;
        q.ket = ket;
        q.window_lo = tau_lo;
        q.window_hi = tau_hi;
        bool inside = true;
        for (int a : term.unpaired_out) {
            const auto& c = out[static_cast<std::size_t>(a)];
            inside = inside && in_window(green_time(c.x), tau_lo, tau_hi);
            q.annihilations.push_back({green_time(c.x), c.channel});
        }
        for (int b : term.unpaired_in) {
            const auto& c = in[static_cast<std::size_t>(b)];
            inside = inside && in_window(green_time(c.x), tau_lo, tau_hi);
            q.creations.push_back({green_time(c.x), c.channel});
        }
        const Complex value = inside ? term.coefficient * green(spec, q) : Complex{0.0, 0.0};
        if (term.k == 0) {
            element.smooth_value = value;
        } else {
            element.delta_terms.push_back({term.pairs, value});
        }
    }
    return element;
}

// ----------------------------------------------------------------------------
// Grid and state

double UniformGrid::weight(std::size_t i) const noexcept {
    if (n < 2) return 0.0;
    return (i == 0 || i + 1 == n) ? 0.5 * dx : dx;
}

UniformGrid UniformGrid::spanning(double x_lo, double x_hi, double dx_target) {
    if (!(dx_target > 0.0)) throw Error(ErrorKind::invalid_argument, "grid spacing must be positive");
    if (x_hi < x_lo) throw Error(ErrorKind::invalid_argument, "grid needs x_hi >= x_lo");
    UniformGrid g;
    g.x_min = x_lo;
    const double span = x_hi - x_lo;
    if (span == 0.0) {
        g.n = 1;
        g.dx = dx_target;
        return g;
    }
    const auto cells = static_cast<std::size_t>(std::max(1.0, std::ceil(span / dx_target - 1e-9)));
    g.n = cells + 1;
    g.dx = span / static_cast<double>(cells);
    return g;
}

WavepacketState WavepacketState::vacuum(UniformGrid grid, int system, Complex amplitude) {
    WavepacketState s(grid);
    s.sector({system, {}}) = {amplitude};
    return s;
}

std::vector<Complex>& WavepacketState::sector(const SectorKey& key) {
    if (!std::is_sorted(key.channels.begin(), key.channels.end())) {
        throw Error(ErrorKind::invalid_argument, "sector channel multiset must be sorted");
    }
    auto it = sectors_.find(key);
    if (it != sectors_.end()) return it->second;
    const std::size_t size = ipow(grid_.n, key.photons());
    if (key.photons() > 0 && size > 100'000'000) {
        throw Error(ErrorKind::truncation_overflow, "sector tensor grid too large");
    }
    return sectors_.emplace(key, std::vector<Complex>(size, Complex{0.0, 0.0})).first->second;
}

const std::vector<Complex>* WavepacketState::find(const SectorKey& key) const {
    auto it = sectors_.find(key);
    return it == sectors_.end() ? nullptr : &it->second;
}

int WavepacketState::max_photons() const noexcept {
    int m = 0;
    for (const auto& [key, _] : sectors_) m = std::max(m, key.photons());
    return m;
}

std::size_t WavepacketState::flat_index(std::span<const std::size_t> idx) const noexcept {
    std::size_t flat = 0;
    for (std::size_t a : idx) flat = flat * grid_.n + a;
    return flat;
}

void WavepacketState::symmetrize() {
    for (auto& [key, amp] : sectors_) {
        const int m = key.photons();
        if (m < 2) continue;
        std::vector<Complex> sym(amp.size());
        std::vector<std::size_t> idx(static_cast<std::size_t>(m), 0);
        do {
            if (!canonical(idx, key.channels)) continue;
            Complex sum = 0.0;
            long count = 0;
            for_each_equivalent(idx, key.channels, [&](const std::vector<std::size_t>& p) {
                sum += amp[flat_index(p)];
                ++count;
            });
            const Complex mean = sum / static_cast<double>(count);
            for_each_equivalent(idx, key.channels,
                                [&](const std::vector<std::size_t>& p) { sym[flat_index(p)] = mean; });
        } while (next_tuple(idx, grid_.n));
        amp = std::move(sym);
    }
}

// ----------------------------------------------------------------------------
// Propagation

std::vector<double> green_times(const UniformGrid& grid, std::span<const double> window_edges) {
    std::vector<double> times(window_edges.begin(), window_edges.end());
    if (window_edges.empty()) return times;
    const auto [lo_it, hi_it] = std::minmax_element(window_edges.begin(), window_edges.end());
    for (std::size_t j = 0; j < grid.n; ++j) {
        const double t = green_time(grid.x(j));
        if (t >= *lo_it - time_match_tolerance(t) && t <= *hi_it + time_match_tolerance(t)) times.push_back(t);
    }
    return times;
}

namespace {

// How one (input sector, pairing subset) pair contributes to an output sector.
struct ContractionPlan {
    Complex coefficient;
    std::vector<std::pair<int, int>> paired;  // (output slot, input slot)
    std::vector<int> unpaired_out;            // output slots
    std::vector<int> free_in_slots;           // input slots integrated over
    std::vector<int> free_in_channels;
};

std::vector<ContractionPlan> contraction_plans(const std::vector<int>& out_channels, const std::vector<int>& in_channels) {
    const int m = static_cast<int>(out_channels.size());
    const int n = static_cast<int>(in_channels.size());
    std::vector<ContractionPlan> plans;
    for (int k = 0; k <= std::min(m, n); ++k) {
        for_each_combination(m, k, [&](const std::vector<int>& out_subset) {
            // Match each paired output slot to an unused input slot of the same channel.
            std::vector<bool> used(static_cast<std::size_t>(n), false);
            ContractionPlan plan;
            for (int a : out_subset) {
                int match = -1;
                for (int b = 0; b < n; ++b) {
                    if (!used[static_cast<std::size_t>(b)] &&
                        in_channels[static_cast<std::size_t>(b)] == out_channels[static_cast<std::size_t>(a)]) {
                        match = b;
                        break;
                    }
                }
                if (match < 0) return;
                used[static_cast<std::size_t>(match)] = true;
                plan.paired.emplace_back(a, match);
            }
            for (int a = 0; a < m; ++a) {
                if (std::find(out_subset.begin(), out_subset.end(), a) == out_subset.end()) plan.unpaired_out.push_back(a);
            }
            for (int b = 0; b < n; ++b) {
                if (!used[static_cast<std::size_t>(b)]) {
                    plan.free_in_slots.push_back(b);
                    plan.free_in_channels.push_back(in_channels[static_cast<std::size_t>(b)]);
                }
            }
            // Summing over input slot assignments and unpaired channel tuples
            // with the 1/N! of the input normalization leaves 1/prod m_nu!.
            plan.coefficient = minus_i_power(m + n - 2 * k) * multiplicity_weight(plan.free_in_channels);
            plans.push_back(std::move(plan));
        });
    }
    return plans;
}

} // namespace

WavepacketState apply_propagator(const SystemSpec& spec, const WavepacketState& state_in, double tau_lo,
                                 double tau_hi, const PropagationOptions& options) {
    if (tau_hi < tau_lo) throw Error(ErrorKind::reversed_interval, "apply_propagator needs tau_lo <= tau_hi");
    if (state_in.max_photons() > options.n_max) {
        throw Error(ErrorKind::truncation_overflow, "input holds " + std::to_string(state_in.max_photons()) +
                                                        " photons, above n_max = " + std::to_string(options.n_max));
    }
    const UniformGrid& grid = state_in.grid();
    const int dim = spec.dim();
    const int n_channels = spec.n_channels();

    std::unique_ptr<EvolutionCache> owned;
    const EvolutionCache* cache = options.cache;
    const double edges[2] = {tau_lo, tau_hi};
    if (!cache) {
        owned = std::make_unique<EvolutionCache>(spec, green_times(grid, edges));
        cache = owned.get();
    }
    const std::size_t lo_mesh = cache->index_of(tau_lo);
    const std::size_t hi_mesh = cache->index_of(tau_hi);

    std::vector<long> mesh_of(grid.n, -1);
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < grid.n; ++j) {
        const double t = green_time(grid.x(j));
        // The last node carries the one-sided limit when it sits on tau_lo:
        // nothing beyond it can pick the value up.
        const bool edge = j + 1 == grid.n && std::abs(t - tau_lo) <= time_match_tolerance(t);
        if (in_window(t, tau_lo, tau_hi) || edge) {
            mesh_of[j] = static_cast<long>(cache->index_of(t));
            active.push_back(j);
        }
    }

    std::vector<Matrix> lowering(static_cast<std::size_t>(n_channels));
    std::vector<Matrix> raising(static_cast<std::size_t>(n_channels));
    for (int mu = 0; mu < n_channels; ++mu) {
        lowering[static_cast<std::size_t>(mu)] = spec.channel(mu);
        raising[static_cast<std::size_t>(mu)] = spec.channel(mu).adjoint();
    }
    std::vector<RowVector> tops(static_cast<std::size_t>(dim), RowVector::Zero(dim));
    std::vector<Vector> bottoms(static_cast<std::size_t>(dim), Vector::Zero(dim));
    for (int s = 0; s < dim; ++s) {
        tops[static_cast<std::size_t>(s)](s) = 1.0;
        bottoms[static_cast<std::size_t>(s)](s) = 1.0;
    }

    MeshChain chain(*cache);
    WavepacketState out(grid);
    std::vector<MeshInsertion> ops;

    for (int m = 0; m <= options.n_max; ++m) {
        for (const auto& out_channels : channel_multisets(n_channels, m)) {
            // Input sectors paired with their contraction plans.
            std::vector<std::pair<const std::pair<const SectorKey, std::vector<Complex>>*, std::vector<ContractionPlan>>>
                sources;
            for (const auto& entry : state_in.sectors()) {
                auto plans = contraction_plans(out_channels, entry.first.channels);
                if (!plans.empty()) sources.emplace_back(&entry, std::move(plans));
            }
            if (sources.empty()) continue;

            for (int bra = 0; bra < dim; ++bra) {
                std::vector<Complex> amp(ipow(grid.n, m), Complex{0.0, 0.0});
                bool any = false;
                std::vector<std::size_t> idx(static_cast<std::size_t>(m), 0);
                do {
                    if (!canonical(idx, out_channels)) continue;
                    Complex value = 0.0;
                    for (const auto& [entry, plans] : sources) {
                        const SectorKey& in_key = entry->first;
                        const std::vector<Complex>& psi = entry->second;
                        const int n_in = in_key.photons();
                        std::vector<std::size_t> in_idx(static_cast<std::size_t>(n_in), 0);
                        for (const auto& plan : plans) {
                            bool inside = true;
                            ops.clear();
                            for (int a : plan.unpaired_out) {
                                const long mesh = mesh_of[idx[static_cast<std::size_t>(a)]];
                                if (mesh < 0) {
                                    inside = false;
                                    break;
                                }
                                ops.push_back({static_cast<std::size_t>(mesh),
                                               &lowering[static_cast<std::size_t>(out_channels[static_cast<std::size_t>(a)])],
                                               false});
                            }
                            if (!inside) continue;
                            for (auto [a, b] : plan.paired) in_idx[static_cast<std::size_t>(b)] = idx[static_cast<std::size_t>(a)];
                            const std::size_t n_free = plan.free_in_slots.size();
                            const std::size_t n_fixed_ops = ops.size();
                            Complex sum = 0.0;
                            std::vector<std::size_t> free(n_free, 0);
                            if (n_free > 0 && active.empty()) continue;
                            do {
                                ops.resize(n_fixed_ops);
                                double w = 1.0;
                                for (std::size_t f = 0; f < n_free; ++f) {
                                    const std::size_t j = active[free[f]];
                                    in_idx[static_cast<std::size_t>(plan.free_in_slots[f])] = j;
                                    w *= grid.weight(j);
                                    ops.push_back({static_cast<std::size_t>(mesh_of[j]),
                                                   &raising[static_cast<std::size_t>(plan.free_in_channels[f])], true});
                                }
                                std::size_t flat = 0;
                                for (std::size_t a : in_idx) flat = flat * grid.n + a;
                                const Complex a_in = psi[flat];
                                if (a_in == Complex{0.0, 0.0} || w == 0.0) continue;
                                sum += w * a_in *
                                       chain.evaluate_tie_averaged(tops[static_cast<std::size_t>(bra)], hi_mesh, ops,
                                                                   bottoms[static_cast<std::size_t>(in_key.system)],
                                                                   lo_mesh);
                            } while (next_tuple(free, active.size()));
                            value += plan.coefficient * sum;
                        }
                    }
                    if (value != Complex{0.0, 0.0}) {
                        any = true;
                        for_each_equivalent(idx, out_channels, [&](const std::vector<std::size_t>& p) {
                            std::size_t flat = 0;
                            for (std::size_t a : p) flat = flat * grid.n + a;
                            amp[flat] = value;
                        });
                    }
                } while (next_tuple(idx, grid.n));
                if (any) out.sector({bra, out_channels}) = std::move(amp);
            }
        }
    }
    return out;
}

WavepacketState to_schrodinger(const WavepacketState& state, double tau) {
    WavepacketState shifted = state;
    UniformGrid g = state.grid();
    g.x_min += tau;
    shifted.set_grid(g);
    return shifted;
}

// ----------------------------------------------------------------------------
// Probabilities

namespace {

// Weighted sum of |amp|^2 over a tensor grid with per-axis weights w.
double tensor_sum(const std::vector<Complex>& amp, int photons, const std::vector<double>& w) {
    if (photons == 0) return std::norm(amp.at(0));
    const std::size_t n = w.size();
    std::vector<std::size_t> idx(static_cast<std::size_t>(photons), 0);
    double total = 0.0;
    std::size_t flat = 0;
    do {
        double weight = 1.0;
        for (std::size_t a : idx) weight *= w[a];
        if (weight != 0.0) total += weight * std::norm(amp[flat]);
        ++flat;
    } while (next_tuple(idx, n));
    return total;
}

} // namespace

SectorProbabilities probabilities(const WavepacketState& state, bool check_resolution) {
    const UniformGrid& g = state.grid();
    std::vector<double> fine(g.n), fine_even(g.n, 0.0), coarse(g.n, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) fine[i] = g.weight(i);
    // Step-doubling estimate over nodes 0..2h.
    const std::size_t h = g.n >= 3 ? (g.n - 1) / 2 : 0;
    if (h > 0) {
        for (std::size_t i = 0; i <= 2 * h; ++i) fine_even[i] = (i == 0 || i == 2 * h) ? 0.5 * g.dx : g.dx;
        for (std::size_t i = 0; i <= 2 * h; i += 2) coarse[i] = (i == 0 || i == 2 * h) ? g.dx : 2.0 * g.dx;
    }

    SectorProbabilities p;
    double norm = 0.0;
    double error = 0.0;
    for (const auto& [key, amp] : state.sectors()) {
        const double mult = multiplicity_weight(key.channels);
        const double value = mult * tensor_sum(amp, key.photons(), fine);
        p[{key.photons(), key.system}] += value;
        norm += value;
        if (check_resolution && key.photons() > 0 && h > 0) {
            const double a = tensor_sum(amp, key.photons(), fine_even);
            const double b = tensor_sum(amp, key.photons(), coarse);
            error += mult * std::abs(a - b) / 3.0;
        }
    }
    if (check_resolution && norm > 0.0 && error > 1e-3 * norm) {
        throw Error(ErrorKind::grid_too_coarse, "estimated quadrature error " + std::to_string(error) +
                                                    " exceeds 1e-3 of the norm " + std::to_string(norm));
    }
    return p;
}

double total_probability(const SectorProbabilities& p) {
    double s = 0.0;
    for (const auto& [_, v] : p) s += v;
    return s;
}

UniformGrid emission_grid(double tau, double dx_target) {
    if (tau < 0.0) throw Error(ErrorKind::invalid_argument, "emission time must be >= 0");
    return UniformGrid::spanning(-tau, 0.0, dx_target);
}

WavepacketState emission_state(const SystemSpec& spec, int initial, double tau, double dx, int n_max,
                               const EvolutionCache* cache) {
    const UniformGrid grid = emission_grid(tau, dx);
    PropagationOptions opt;
    opt.n_max = n_max;
    opt.cache = cache;
    return apply_propagator(spec, WavepacketState::vacuum(grid, initial), 0.0, tau, opt);
}

// ----------------------------------------------------------------------------
// Exact emission probabilities

SectorProbabilities emission_probabilities(const SystemSpec& spec, int initial, double tau, int n_max) {
    if (tau < 0.0) throw Error(ErrorKind::reversed_interval, "emission time must be >= 0");
    if (n_max < 0) throw Error(ErrorKind::invalid_argument, "n_max must be >= 0");
    const int s = spec.dim();
    const int block = s * s;
    const int total = block * (n_max + 1);
    const Matrix id = Matrix::Identity(s, s);

    // Column-major vec: vec(A X B) = (B^T kron A) vec(X).
    const auto kron = [](const Matrix& a, const Matrix& b) {
        Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
        return k;
    };
    Matrix jump = Matrix::Zero(block, block);
    for (const auto& l : spec.channels()) jump += kron(l.conjugate(), l);

    const auto generator = [&](double t) -> Matrix {
        const Matrix h = h_eff(spec, t);
        const Matrix no_jump = Complex(0.0, -1.0) * kron(id, h) + Complex(0.0, 1.0) * kron(h.conjugate(), id);
        Matrix g = Matrix::Zero(total, total);
        for (int n = 0; n <= n_max; ++n) {
            g.block(n * block, n * block, block, block) = no_jump;
            if (n > 0) g.block(n * block, (n - 1) * block, block, block) = jump;
        }
        return g;
    };

    Vector rho = Vector::Zero(total);
    rho(initial + initial * s) = 1.0;
    std::vector<double> pts{0.0};
    for (double b : spec.breakpoints()) {
        if (b > time_match_tolerance(b) && b < tau - time_match_tolerance(b)) pts.push_back(b);
    }
    pts.push_back(tau);
    MagnusSettings settings;
    if (spec.driven()) {
        const auto [lo, hi] = spec.drive_support();
        if (hi > lo) settings.base_step = std::min(settings.base_step, (hi - lo) / 100.0);
    }
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        rho = time_ordered_exp(generator, pts[k], pts[k + 1], spec.drives_piecewise_constant(), settings) * rho;
    }

    SectorProbabilities p;
    for (int n = 0; n <= n_max; ++n) {
        for (int sigma = 0; sigma < s; ++sigma) p[{n, sigma}] = rho(n * block + sigma + sigma * s).real();
    }
    return p;
}

} // namespace fewphoton
