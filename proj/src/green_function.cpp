#include "fewphoton/green_function.hpp"

#include "fewphoton/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace fewphoton {

namespace {

struct TimedOp {
    double time;
    Matrix op;
    bool creation;
};

void check_channel(const SystemSpec& spec, int channel) {
    if (channel < 0 || channel >= spec.n_channels()) {
        throw Error(ErrorKind::invalid_argument, "channel " + std::to_string(channel) + " out of range");
    }
}

void check_index(const SystemSpec& spec, int index, const char* what) {
    if (index < 0 || index >= spec.dim()) {
        throw Error(ErrorKind::invalid_argument, std::string(what) + " index " + std::to_string(index) + " out of range");
    }
}

// Descending time; at ties annihilations (L) sit left of creations (L^dagger);
// same-kind ties keep input order.
std::vector<TimedOp> chain_order(const SystemSpec& spec, std::span<const Insertion> annihilations,
                                 std::span<const Insertion> creations) {
    std::vector<TimedOp> ops;
    ops.reserve(annihilations.size() + creations.size());
    for (const auto& a : annihilations) {
        check_channel(spec, a.channel);
        ops.push_back({a.time, spec.channel(a.channel), false});
    }
    for (const auto& c : creations) {
        check_channel(spec, c.channel);
        ops.push_back({c.time, spec.channel(c.channel).adjoint(), true});
    }
    std::stable_sort(ops.begin(), ops.end(), [](const TimedOp& x, const TimedOp& y) {
        if (x.time != y.time) return x.time > y.time;
        return !x.creation && y.creation;
    });
    return ops;
}

using Propagator = std::function<Matrix(double, double)>;

// top * U(top_time <- ops[0]) ops[0] ... U(ops.back() <- bottom_time) * bottom
Complex evaluate_chain(const RowVector& top, double top_time, const std::vector<TimedOp>& ops, const Vector& bottom,
                       double bottom_time, const Propagator& propagate) {
    Vector v = bottom;
    double t = bottom_time;
    for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
        if (it->time > t) v = propagate(t, it->time) * v;
        v = it->op * v;
        t = it->time;
        if (v.squaredNorm() == 0.0) return {0.0, 0.0};
    }
    if (top_time > t) v = propagate(t, top_time) * v;
    Complex amp = top * v;
    if (std::abs(amp) < green_flush_threshold) amp = {0.0, 0.0};
    return amp;
}

Propagator cached_propagator(const SystemSpec& spec, const EvolutionCache* cache) {
    if (cache) {
        return [&spec, cache](double a, double b) { return u_eff(spec, a, b, *cache); };
    }
    return [&spec](double a, double b) { return u_eff(spec, a, b); };
}

Complex green_impl(const SystemSpec& spec, const GreenQuery& q, const EvolutionCache* cache) {
    check_index(spec, q.bra, "bra");
    check_index(spec, q.ket, "ket");
    if (q.window_hi < q.window_lo) throw Error(ErrorKind::reversed_interval, "green window has hi < lo");
    const auto outside = [&](const Insertion& i) {
        return i.time < q.window_lo - time_match_tolerance(i.time) ||
               i.time > q.window_hi + time_match_tolerance(i.time);
    };
    for (const auto* list : {&q.annihilations, &q.creations}) {
        for (const auto& i : *list) {
            if (outside(i)) {
                throw Error(ErrorKind::time_outside_window,
                            "insertion at t=" + std::to_string(i.time) + " outside [" + std::to_string(q.window_lo) +
                                ", " + std::to_string(q.window_hi) + "]");
            }
        }
    }
    const auto ops = chain_order(spec, q.annihilations, q.creations);
    RowVector top = RowVector::Zero(spec.dim());
    top(q.bra) = 1.0;
    Vector bottom = Vector::Zero(spec.dim());
    bottom(q.ket) = 1.0;
    // Clamp insertion times that match the window edges within tolerance.
    std::vector<TimedOp> clamped = ops;
    for (auto& op : clamped) op.time = std::clamp(op.time, q.window_lo, q.window_hi);
    return evaluate_chain(top, q.window_hi, clamped, bottom, q.window_lo, cached_propagator(spec, cache));
}

} // namespace

Complex green(const SystemSpec& spec, const GreenQuery& query, const EvolutionCache& cache) {
    return green_impl(spec, query, &cache);
}

Complex green(const SystemSpec& spec, const GreenQuery& query) { return green_impl(spec, query, nullptr); }

Complex green_scattering(const SystemSpec& spec, std::span<const Insertion> annihilations,
                         std::span<const Insertion> creations, int g_m, int g_n, const EvolutionCache* cache) {
    const auto states = classify_states(spec);
    if (!states.is_ground(g_m)) {
        throw Error(ErrorKind::not_ground_state, "bra index " + std::to_string(g_m) + " is not a ground state");
    }
    if (!states.is_ground(g_n)) {
        throw Error(ErrorKind::not_ground_state, "ket index " + std::to_string(g_n) + " is not a ground state");
    }
    double t_pulse = 0.0;
    if (spec.driven()) {
        const auto [lo, hi] = spec.drive_support();
        if (lo < -time_match_tolerance(lo)) {
            throw Error(ErrorKind::invalid_argument, "scattering needs the drive to vanish for t < 0");
        }
        t_pulse = std::max(0.0, hi);
    }
    const auto ops = chain_order(spec, annihilations, creations);
    const double eps_m = states.energies[static_cast<std::size_t>(g_m)];
    const double eps_n = states.energies[static_cast<std::size_t>(g_n)];

    // Past T_P the bra is a left eigenvector of the asymptotic evolution, so
    // <g_m| U_eff(T_P <- t) reduces to a phase; before 0 the same holds for
    // U_eff(t <- 0)|g_n>. The tau-dependent phases are dropped.
    double top_time = t_pulse;
    Complex top_phase = 1.0;
    if (!ops.empty() && ops.front().time > t_pulse) {
        top_time = ops.front().time;
        top_phase = std::exp(Complex(0.0, eps_m * (top_time - t_pulse)));
    }
    double bottom_time = 0.0;
    Complex bottom_phase = 1.0;
    if (!ops.empty() && ops.back().time < 0.0) {
        bottom_time = ops.back().time;
        bottom_phase = std::exp(Complex(0.0, -eps_n * bottom_time));
    }
    RowVector top = RowVector::Zero(spec.dim());
    top(g_m) = top_phase;
    Vector bottom = Vector::Zero(spec.dim());
    bottom(g_n) = bottom_phase;
    return evaluate_chain(top, top_time, ops, bottom, bottom_time, cached_propagator(spec, cache));
}

double green_norm_bound(const SystemSpec& spec, const GreenQuery& query) {
    double bound = 1.0;
    for (const auto* list : {&query.annihilations, &query.creations}) {
        for (const auto& i : *list) {
            Eigen::JacobiSVD<Matrix> svd(spec.channel(i.channel));
            bound *= svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
        }
    }
    return bound;
}

// ----------------------------------------------------------------------------
// MeshChain

MeshChain::MeshChain(const EvolutionCache& cache)
    : cache_(&cache), work_a_(cache.spec().dim()), work_b_(cache.spec().dim()) {}

void MeshChain::sort_chain_order(std::vector<MeshInsertion>& ops) {
    std::stable_sort(ops.begin(), ops.end(), [](const MeshInsertion& x, const MeshInsertion& y) {
        if (x.mesh != y.mesh) return x.mesh > y.mesh;
        return !x.creation && y.creation;
    });
}

Complex MeshChain::evaluate(const RowVector& top, std::size_t top_mesh, std::span<const MeshInsertion> ops,
                            const Vector& bottom, std::size_t bottom_mesh) {
    work_a_ = bottom;
    std::size_t t = bottom_mesh;
    for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
        if (it->mesh > t) {
            work_b_.noalias() = cache_->segment(t, it->mesh) * work_a_;
            work_a_.swap(work_b_);
        }
        work_b_.noalias() = (*it->op) * work_a_;
        work_a_.swap(work_b_);
        t = it->mesh;
    }
    if (top_mesh > t) {
        work_b_.noalias() = cache_->segment(t, top_mesh) * work_a_;
        work_a_.swap(work_b_);
    }
    Complex amp = top * work_a_;
    if (std::abs(amp) < green_flush_threshold) amp = {0.0, 0.0};
    return amp;
}

Complex MeshChain::evaluate_tie_averaged(const RowVector& top, std::size_t top_mesh,
                                         std::span<const MeshInsertion> ops, const Vector& bottom,
                                         std::size_t bottom_mesh) {
    scratch_.assign(ops.begin(), ops.end());
    sort_chain_order(scratch_);
    // Locate tie groups holding more than one distinct operator.
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < scratch_.size();) {
        std::size_t j = i + 1;
        bool mixed = false;
        while (j < scratch_.size() && scratch_[j].mesh == scratch_[i].mesh) {
            if (scratch_[j].op != scratch_[i].op) mixed = true;
            ++j;
        }
        if (mixed) groups.emplace_back(i, j);
        i = j;
    }
    if (groups.empty()) return evaluate(top, top_mesh, scratch_, bottom, bottom_mesh);

    // Enumerate all orderings within every mixed group (odometer over groups).
    std::vector<MeshInsertion> base = scratch_;
    std::vector<std::vector<std::size_t>> perms(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        perms[g].resize(groups[g].second - groups[g].first);
        std::iota(perms[g].begin(), perms[g].end(), std::size_t{0});
    }
    std::vector<MeshInsertion> ordered = base;
    Complex sum = 0.0;
    long count = 0;
    while (true) {
        for (std::size_t g = 0; g < groups.size(); ++g) {
            for (std::size_t k = 0; k < perms[g].size(); ++k) {
                ordered[groups[g].first + k] = base[groups[g].first + perms[g][k]];
            }
        }
        sum += evaluate(top, top_mesh, ordered, bottom, bottom_mesh);
        ++count;
        std::size_t g = 0;
        while (g < groups.size() && !std::next_permutation(perms[g].begin(), perms[g].end())) ++g;
        if (g == groups.size()) break;
    }
    return sum / static_cast<double>(count);
}

} // namespace fewphoton
