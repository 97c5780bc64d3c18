// green_function.hpp - vacuum Green's functions of the system, evaluated as
// chains of effective propagator segments and coupling-operator insertions.

#pragma once

#include "fewphoton/effective_evolution.hpp"
#include "fewphoton/system_model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace fewphoton {

struct Insertion {
    double time = 0.0;
    int channel = 0;
};

struct GreenQuery {
    std::vector<Insertion> annihilations; // L_mu factors
    std::vector<Insertion> creations;     // L_mu^dagger factors
    int bra = 0;
    int ket = 0;
    double window_lo = 0.0;
    double window_hi = 0.0;
};

// <bra| U_eff(hi <- t_1) s_1 U_eff(t_1 <- t_2) ... s_N U_eff(t_N <- lo) |ket>
// with insertions sorted by descending time. At equal times an annihilation
// is placed to the left of a creation; equal-kind ties keep input order.
Complex green(const SystemSpec& spec, const GreenQuery& query, const EvolutionCache& cache);
Complex green(const SystemSpec& spec, const GreenQuery& query);

// Scattering-limit Green's function between ground states g_m (bra) and g_n
// (ket): <g_m| U_eff(T_P <- 0) T[prod L~ prod L~^dagger] |g_n> with the
// asymptotic ground-state phases dropped. T_P is the end of the drive support;
// the drive must vanish for t < 0.
Complex green_scattering(const SystemSpec& spec, std::span<const Insertion> annihilations,
                         std::span<const Insertion> creations, int g_m, int g_n,
                         const EvolutionCache* cache = nullptr);

// Operator-norm bound prod ||s_i||_op for a query (|green| never exceeds it).
double green_norm_bound(const SystemSpec& spec, const GreenQuery& query);

// Amplitudes below this are flushed to zero.
inline constexpr double green_flush_threshold = 1e-300;

// ----------------------------------------------------------------------------
// Mesh-indexed evaluation used by the propagator and scattering quadratures.

struct MeshInsertion {
    std::size_t mesh = 0;
    const Matrix* op = nullptr;
    bool creation = false;
};

// Reusable evaluator bound to one cache. Holds work buffers, so use one
// instance per thread.
class MeshChain {
public:
    explicit MeshChain(const EvolutionCache& cache);

    const EvolutionCache& cache() const noexcept { return *cache_; }

    // top * U(top <- ops[0]) ops[0] ... ops[n-1] U(ops[n-1] <- bottom) * bottom.
    // `ops` must already be in chain order (descending mesh index).
    Complex evaluate(const RowVector& top, std::size_t top_mesh, std::span<const MeshInsertion> ops,
                     const Vector& bottom, std::size_t bottom_mesh);

    // Same chain with `ops` in any order. Equal-time groups holding distinct
    // operators are averaged over all their orderings: the value at a node
    // lying on a time-ordering discontinuity is the mean of the adjacent
    // one-sided limits, which keeps trapezoid quadrature second order.
    Complex evaluate_tie_averaged(const RowVector& top, std::size_t top_mesh, std::span<const MeshInsertion> ops,
                                  const Vector& bottom, std::size_t bottom_mesh);

    // Chain order used by green(): descending mesh, annihilation before
    // creation at ties, stable otherwise.
    static void sort_chain_order(std::vector<MeshInsertion>& ops);

private:
    const EvolutionCache* cache_;
    Vector work_a_;
    Vector work_b_;
    std::vector<MeshInsertion> scratch_;
};

} // namespace fewphoton
