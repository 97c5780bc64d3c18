#include "fewphoton/effective_evolution.hpp"

#include "fewphoton/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace fewphoton {

Matrix expm(const Matrix& a) { return a.exp(); }

Matrix h_eff_static(const SystemSpec& spec) {
    return spec.h_static() - Complex(0.0, 0.5) * spec.decay_operator();
}

Matrix h_eff(const SystemSpec& spec, double t) {
    return spec.hamiltonian(t) - Complex(0.0, 0.5) * spec.decay_operator();
}

Matrix u_eff0(const SystemSpec& spec, double dt) {
    if (dt < 0.0) throw Error(ErrorKind::reversed_interval, "u_eff0 needs dt >= 0");
    if (dt == 0.0) return Matrix::Identity(spec.dim(), spec.dim());
    return expm(Complex(0.0, -dt) * h_eff_static(spec));
}

double time_match_tolerance(double t) noexcept { return 1e-10 * std::max(1.0, std::abs(t)); }

namespace {

Matrix adaptive_midpoint(const std::function<Matrix(double)>& generator, double a, double b, int depth,
                         const MagnusSettings& settings) {
    const double m = 0.5 * (a + b);
    const Matrix one = expm(generator(m) * (b - a));
    const Matrix half = expm(generator(0.5 * (m + b)) * (b - m)) * expm(generator(0.5 * (a + m)) * (m - a));
    if (depth >= settings.max_depth || (one - half).cwiseAbs().maxCoeff() <= settings.local_tolerance) {
        return half;
    }
    return adaptive_midpoint(generator, m, b, depth + 1, settings) *
           adaptive_midpoint(generator, a, m, depth + 1, settings);
}

// Interval endpoints split at every drive breakpoint strictly inside (t0, t1).
std::vector<double> split_points(const SystemSpec& spec, double t0, double t1) {
    std::vector<double> pts{t0};
    for (double b : spec.breakpoints()) {
        if (b > t0 + time_match_tolerance(b) && b < t1 - time_match_tolerance(b)) pts.push_back(b);
    }
    pts.push_back(t1);
    return pts;
}

double magnus_step_for(const SystemSpec& spec, const MagnusSettings& settings) {
    double h = settings.base_step;
    if (spec.driven()) {
        const auto [lo, hi] = spec.drive_support();
        if (hi > lo) h = std::min(h, (hi - lo) / 100.0);
    }
    return h;
}

Matrix propagate_plain(const SystemSpec& spec, double t0, double t1, const MagnusSettings& settings,
                       double magnus_step) {
    const int n = spec.dim();
    Matrix u = Matrix::Identity(n, n);
    if (t1 == t0) return u;
    const auto pts = split_points(spec, t0, t1);
    const bool constant = spec.drives_piecewise_constant();
    MagnusSettings local = settings;
    local.base_step = magnus_step;
    const auto generator = [&spec](double t) -> Matrix { return Complex(0.0, -1.0) * h_eff(spec, t); };
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        u = time_ordered_exp(generator, pts[k], pts[k + 1], constant, local) * u;
    }
    return u;
}

} // namespace

Matrix time_ordered_exp(const std::function<Matrix(double)>& generator, double t0, double t1, bool constant,
                        const MagnusSettings& settings) {
    if (t1 < t0) throw Error(ErrorKind::reversed_interval, "time_ordered_exp needs t1 >= t0");
    const double len = t1 - t0;
    const Matrix mid = generator(0.5 * (t0 + t1));
    if (len == 0.0) return Matrix::Identity(mid.rows(), mid.cols());
    if (constant) return expm(mid * len);
    const auto m = static_cast<long>(std::max(1.0, std::ceil(len / settings.base_step - 1e-9)));
    const double h = len / static_cast<double>(m);
    Matrix u = Matrix::Identity(mid.rows(), mid.cols());
    for (long k = 0; k < m; ++k) {
        const double a = t0 + static_cast<double>(k) * h;
        const double b = (k + 1 == m) ? t1 : a + h;
        u = adaptive_midpoint(generator, a, b, 0, settings) * u;
    }
    return u;
}

Matrix u_eff(const SystemSpec& spec, double t_from, double t_to, const MagnusSettings& settings) {
    if (t_to < t_from) throw Error(ErrorKind::reversed_interval, "u_eff needs t_to >= t_from");
    return propagate_plain(spec, t_from, t_to, settings, magnus_step_for(spec, settings));
}

// ----------------------------------------------------------------------------
// EvolutionCache

EvolutionCache::EvolutionCache(SystemSpec spec, std::vector<double> times, MagnusSettings settings)
    : spec_(std::move(spec)), settings_(settings) {
    if (times.empty()) throw Error(ErrorKind::invalid_argument, "evolution mesh needs at least one time");
    std::sort(times.begin(), times.end());
    const double lo = times.front();
    const double hi = times.back();
    for (double b : spec_.breakpoints()) {
        if (b > lo && b < hi) times.push_back(b);
    }
    std::sort(times.begin(), times.end());
    for (double t : times) {
        if (mesh_.empty() || t - mesh_.back() > time_match_tolerance(t)) mesh_.push_back(t);
    }
    magnus_step_ = spec_.drives_piecewise_constant() ? 0.0 : magnus_step_for(spec_, settings_);
    const double step_for_propagation = magnus_step_for(spec_, settings_);
    steps_.reserve(mesh_.size());
    for (std::size_t k = 0; k + 1 < mesh_.size(); ++k) {
        steps_.push_back(propagate_plain(spec_, mesh_[k], mesh_[k + 1], settings_, step_for_propagation));
    }
    rows_.resize(mesh_.size());
}

std::optional<std::size_t> EvolutionCache::find(double t) const {
    auto it = std::lower_bound(mesh_.begin(), mesh_.end(), t - time_match_tolerance(t));
    if (it != mesh_.end() && std::abs(*it - t) <= time_match_tolerance(t)) {
        return static_cast<std::size_t>(it - mesh_.begin());
    }
    return std::nullopt;
}

std::size_t EvolutionCache::index_of(double t) const {
    if (auto k = find(t)) return *k;
    throw Error(ErrorKind::invalid_argument, "time " + std::to_string(t) + " is not on the evolution mesh");
}

const std::vector<Complex>& EvolutionCache::row(std::size_t from) const {
    {
        std::shared_lock lock(mutex_);
        if (rows_[from]) return *rows_[from];
    }
    std::unique_lock lock(mutex_);
    if (rows_[from]) return *rows_[from];
    const auto n = static_cast<std::size_t>(spec_.dim());
    const std::size_t count = mesh_.size() - from;
    auto data = std::make_unique<std::vector<Complex>>(count * n * n);
    Matrix u = Matrix::Identity(spec_.dim(), spec_.dim());
    Eigen::Map<Matrix>(data->data(), spec_.dim(), spec_.dim()) = u;
    for (std::size_t k = 1; k < count; ++k) {
        u = steps_[from + k - 1] * u;
        Eigen::Map<Matrix>(data->data() + k * n * n, spec_.dim(), spec_.dim()) = u;
    }
    rows_[from] = std::move(data);
    return *rows_[from];
}

Eigen::Map<const Matrix> EvolutionCache::segment(std::size_t from, std::size_t to) const {
    if (to < from) throw Error(ErrorKind::reversed_interval, "segment needs from <= to");
    if (to >= mesh_.size()) throw Error(ErrorKind::invalid_argument, "segment index outside mesh");
    const auto n = static_cast<std::size_t>(spec_.dim());
    const auto& r = row(from);
    return Eigen::Map<const Matrix>(r.data() + (to - from) * n * n, spec_.dim(), spec_.dim());
}

std::size_t EvolutionCache::cached_rows() const {
    std::shared_lock lock(mutex_);
    return static_cast<std::size_t>(std::count_if(rows_.begin(), rows_.end(), [](const auto& r) { return r != nullptr; }));
}

Matrix u_eff(const SystemSpec& spec, double t_from, double t_to, const EvolutionCache& cache) {
    if (t_to < t_from) throw Error(ErrorKind::reversed_interval, "u_eff needs t_to >= t_from");
    const auto i = cache.find(t_from);
    const auto j = cache.find(t_to);
    if (i && j) return cache.segment(*i, *j);
    return u_eff(spec, t_from, t_to, cache.settings());
}

} // namespace fewphoton
