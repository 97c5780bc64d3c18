// effective_evolution.hpp - no-jump evolution of the system under
//   H_eff(t) = H_sys(t) - (i/2) sum_mu L_mu^dagger L_mu
// and a mesh-indexed cache of its time-ordered propagator segments.

#pragma once

#include "fewphoton/system_model.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <vector>

namespace fewphoton {

// Dense matrix exponential (scaling and squaring with Pade approximants).
Matrix expm(const Matrix& a);

Matrix h_eff(const SystemSpec& spec, double t);
// h_static - (i/2) sum_mu L_mu^dagger L_mu
Matrix h_eff_static(const SystemSpec& spec);

// exp[-(i H_sys^0 + 1/2 sum L^dagger L) dt]; drive terms excluded.
Matrix u_eff0(const SystemSpec& spec, double dt);

struct MagnusSettings {
    // Upper bound on the midpoint step; further capped at (drive support)/100.
    double base_step = 0.01;
    // Step-doubling tolerance on the max-entry difference of one step vs two half steps.
    double local_tolerance = 1e-10;
    int max_depth = 40;
};

// Time-ordered exponential of dU/dt = A(t) U over [t0, t1]. Constant
// generators are exponentiated exactly; otherwise adaptive second-order
// Magnus (midpoint) steps are used.
Matrix time_ordered_exp(const std::function<Matrix(double)>& generator, double t0, double t1, bool constant,
                        const MagnusSettings& settings);

// Uncached U_eff(t_to <- t_from).
Matrix u_eff(const SystemSpec& spec, double t_from, double t_to, const MagnusSettings& settings = {});

// Breakpoint mesh with memoized propagator segments. Segments are keyed by
// mesh index; the mesh always contains the drive breakpoints that fall inside
// its range so piecewise-constant intervals are integrated exactly.
//
// Reads take a shared lock and rows are filled under an exclusive lock, so a
// cache may be shared by concurrent readers. Identical queries return
// bitwise-identical matrices.
class EvolutionCache {
public:
    EvolutionCache(SystemSpec spec, std::vector<double> times, MagnusSettings settings = {});

    EvolutionCache(const EvolutionCache&) = delete;
    EvolutionCache& operator=(const EvolutionCache&) = delete;

    const SystemSpec& spec() const noexcept { return spec_; }
    const std::vector<double>& mesh() const noexcept { return mesh_; }
    std::size_t size() const noexcept { return mesh_.size(); }
    const MagnusSettings& settings() const noexcept { return settings_; }
    // Effective Magnus step used for time-dependent intervals (0 if none).
    double magnus_step() const noexcept { return magnus_step_; }

    std::optional<std::size_t> find(double t) const;
    std::size_t index_of(double t) const;

    // U_eff(mesh[to] <- mesh[from]), from <= to.
    Eigen::Map<const Matrix> segment(std::size_t from, std::size_t to) const;
    // U_eff(mesh[k+1] <- mesh[k])
    const Matrix& step(std::size_t k) const { return steps_.at(k); }

    std::size_t cached_rows() const;

private:
    const std::vector<Complex>& row(std::size_t from) const;

    SystemSpec spec_;
    std::vector<double> mesh_;
    MagnusSettings settings_;
    double magnus_step_ = 0.0;
    std::vector<Matrix> steps_;
    mutable std::shared_mutex mutex_;
    mutable std::vector<std::unique_ptr<std::vector<Complex>>> rows_;
};

// Cached U_eff(t_to <- t_from). Uses mesh segments when both endpoints are on
// the mesh, otherwise integrates directly.
Matrix u_eff(const SystemSpec& spec, double t_from, double t_to, const EvolutionCache& cache);

// Tolerance used to match times against mesh nodes.
double time_match_tolerance(double t) noexcept;

} // namespace fewphoton
