#include "fewphoton/system_model.hpp"

#include "fewphoton/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fewphoton {

namespace {

double max_abs_entry(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

void check_square(const Matrix& m, int dim, const std::string& what) {
    if (m.rows() != dim || m.cols() != dim) {
        std::ostringstream os;
        os << what << " is " << m.rows() << "x" << m.cols() << ", expected " << dim << "x" << dim;
        throw Error(ErrorKind::dimension_mismatch, os.str());
    }
}

void check_hermitian(const Matrix& m, const std::string& what) {
    const double defect = max_abs_entry(m - m.adjoint());
    if (defect > hermiticity_tolerance) {
        std::ostringstream os;
        os << what << " is not Hermitian (max |H - H^dagger| entry = " << defect << ")";
        throw Error(ErrorKind::non_hermitian_hamiltonian, os.str());
    }
}

void sort_unique(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

} // namespace

// ----------------------------------------------------------------------------
// PulseEnvelope

PulseEnvelope PulseEnvelope::zero() { return PulseEnvelope{}; }

PulseEnvelope PulseEnvelope::rectangular(double amplitude, double t_start, double t_end) {
    if (!(t_end >= t_start)) {
        throw Error(ErrorKind::invalid_argument, "rectangular envelope needs t_end >= t_start");
    }
    PulseEnvelope e;
    e.kind_ = Kind::rectangular;
    e.amplitude_ = amplitude;
    e.t_start_ = t_start;
    e.t_end_ = t_end;
    return e;
}

PulseEnvelope PulseEnvelope::tabulated(std::vector<std::pair<double, double>> samples) {
    if (samples.size() < 2) {
        throw Error(ErrorKind::invalid_argument, "tabulated envelope needs at least two samples");
    }
    std::sort(samples.begin(), samples.end());
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (!(samples[i].first > samples[i - 1].first)) {
            throw Error(ErrorKind::invalid_argument, "tabulated envelope sample times must be distinct");
        }
    }
    PulseEnvelope e;
    e.kind_ = Kind::tabulated;
    e.t_start_ = samples.front().first;
    e.t_end_ = samples.back().first;
    for (const auto& s : samples) e.amplitude_ = std::max(e.amplitude_, std::abs(s.second));
    e.samples_ = std::move(samples);
    return e;
}

double PulseEnvelope::operator()(double t) const {
    switch (kind_) {
    case Kind::zero:
        return 0.0;
    case Kind::rectangular:
        return (t >= t_start_ && t <= t_end_) ? amplitude_ : 0.0;
    case Kind::tabulated: {
        if (t < t_start_ || t > t_end_) return 0.0;
        auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                                   [](double x, const auto& s) { return x < s.first; });
        if (it == samples_.end()) return samples_.back().second;
        if (it == samples_.begin()) return samples_.front().second;
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double w = (t - lo.first) / (hi.first - lo.first);
        return (1.0 - w) * lo.second + w * hi.second;
    }
    }
    return 0.0;
}

bool PulseEnvelope::vanishes() const noexcept {
    switch (kind_) {
    case Kind::zero: return true;
    case Kind::rectangular: return amplitude_ == 0.0 || t_end_ == t_start_;
    case Kind::tabulated:
        return std::all_of(samples_.begin(), samples_.end(), [](const auto& s) { return s.second == 0.0; });
    }
    return true;
}

std::vector<double> PulseEnvelope::breakpoints() const {
    switch (kind_) {
    case Kind::zero: return {};
    case Kind::rectangular: return {t_start_, t_end_};
    case Kind::tabulated: {
        std::vector<double> out;
        out.reserve(samples_.size());
        for (const auto& s : samples_) out.push_back(s.first);
        return out;
    }
    }
    return {};
}

// ----------------------------------------------------------------------------
// SystemSpec

SystemSpec::SystemSpec(SystemDescription d)
    : dim_(d.dim), labels_(std::move(d.labels)), h_static_(std::move(d.h_static)),
      drives_(std::move(d.drives)), channels_(std::move(d.channels)) {
    if (dim_ < 1) throw Error(ErrorKind::dimension_mismatch, "system dimension must be >= 1");
    if (labels_.empty()) {
        for (int i = 0; i < dim_; ++i) labels_.push_back("s" + std::to_string(i));
    }
    if (static_cast<int>(labels_.size()) != dim_) {
        throw Error(ErrorKind::dimension_mismatch,
                    "expected " + std::to_string(dim_) + " basis labels, got " + std::to_string(labels_.size()));
    }
    check_square(h_static_, dim_, "h_static");
    check_hermitian(h_static_, "h_static");
    for (std::size_t i = 0; i < drives_.size(); ++i) {
        const std::string what = "drives[" + std::to_string(i) + "].matrix";
        check_square(drives_[i].matrix, dim_, what);
        check_hermitian(drives_[i].matrix, what);
    }
    if (channels_.empty()) throw Error(ErrorKind::dimension_mismatch, "at least one channel is required");
    decay_operator_ = Matrix::Zero(dim_, dim_);
    for (std::size_t mu = 0; mu < channels_.size(); ++mu) {
        check_square(channels_[mu], dim_, "channels[" + std::to_string(mu) + "]");
        decay_operator_ += channels_[mu].adjoint() * channels_[mu];
    }
}

Matrix SystemSpec::hamiltonian(double t) const {
    Matrix h = h_static_;
    for (const auto& d : drives_) {
        const double a = d.envelope(t);
        if (a != 0.0) h += a * d.matrix;
    }
    return h;
}

bool SystemSpec::driven() const noexcept {
    return std::any_of(drives_.begin(), drives_.end(), [](const DriveTerm& d) {
        return !d.envelope.vanishes() && max_abs_entry(d.matrix) > 0.0;
    });
}

std::vector<double> SystemSpec::breakpoints() const {
    std::vector<double> out;
    for (const auto& d : drives_) {
        if (d.envelope.vanishes()) continue;
        const auto b = d.envelope.breakpoints();
        out.insert(out.end(), b.begin(), b.end());
    }
    sort_unique(out);
    return out;
}

std::pair<double, double> SystemSpec::drive_support() const {
    bool any = false;
    double lo = 0.0, hi = 0.0;
    for (const auto& d : drives_) {
        if (d.envelope.vanishes()) continue;
        if (!any) {
            lo = d.envelope.t_start();
            hi = d.envelope.t_end();
            any = true;
        } else {
            lo = std::min(lo, d.envelope.t_start());
            hi = std::max(hi, d.envelope.t_end());
        }
    }
    return {lo, hi};
}

bool SystemSpec::drives_piecewise_constant() const noexcept {
    return std::all_of(drives_.begin(), drives_.end(),
                       [](const DriveTerm& d) { return d.envelope.vanishes() || d.envelope.piecewise_constant(); });
}

int SystemSpec::label_index(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw Error(ErrorKind::invalid_argument, "unknown basis label '" + label + "'");
    return static_cast<int>(it - labels_.begin());
}

bool StateClassification::is_ground(int index) const {
    return std::find(ground_indices.begin(), ground_indices.end(), index) != ground_indices.end();
}

// ----------------------------------------------------------------------------
// Builders

SystemSpec build_system(SystemDescription raw) { return SystemSpec(std::move(raw)); }

SystemSpec make_tls(double delta_a, double omega0, double t_pulse, const std::vector<double>& rates) {
    if (t_pulse < 0.0) throw Error(ErrorKind::invalid_argument, "pulse duration must be >= 0");
    SystemDescription d;
    d.dim = 2;
    d.labels = {"g", "e"};
    d.h_static = Matrix::Zero(2, 2);
    d.h_static(1, 1) = delta_a;
    Matrix x = Matrix::Zero(2, 2);
    x(0, 1) = 1.0;
    x(1, 0) = 1.0;
    const bool driven = omega0 != 0.0 && t_pulse > 0.0;
    d.drives.push_back({x, driven ? PulseEnvelope::rectangular(omega0, 0.0, t_pulse) : PulseEnvelope::zero()});
    if (rates.empty()) throw Error(ErrorKind::dimension_mismatch, "at least one channel rate is required");
    for (double rate : rates) {
        if (rate < 0.0) throw Error(ErrorKind::negative_rate, "channel rate " + std::to_string(rate) + " < 0");
        Matrix l = Matrix::Zero(2, 2);
        l(0, 1) = std::sqrt(rate);
        d.channels.push_back(l);
    }
    return SystemSpec(std::move(d));
}

SystemSpec make_lambda(double delta_e, double delta_12, double omega0, double t_pulse, double gamma1,
                       double gamma2) {
    if (t_pulse < 0.0) throw Error(ErrorKind::invalid_argument, "pulse duration must be >= 0");
    for (double rate : {gamma1, gamma2}) {
        if (rate < 0.0) throw Error(ErrorKind::negative_rate, "channel rate " + std::to_string(rate) + " < 0");
    }
    constexpr int g1 = 0, g2 = 1, e = 2;
    SystemDescription d;
    d.dim = 3;
    d.labels = {"g1", "g2", "e"};
    d.h_static = Matrix::Zero(3, 3);
    d.h_static(g1, g1) = delta_12;
    d.h_static(e, e) = delta_e;
    Matrix x = Matrix::Zero(3, 3);
    x(g1, e) = 1.0;
    x(e, g1) = 1.0;
    const bool driven = omega0 != 0.0 && t_pulse > 0.0;
    d.drives.push_back({x, driven ? PulseEnvelope::rectangular(omega0, 0.0, t_pulse) : PulseEnvelope::zero()});
    Matrix l1 = Matrix::Zero(3, 3);
    l1(g1, e) = std::sqrt(gamma1);
    Matrix l2 = Matrix::Zero(3, 3);
    l2(g2, e) = std::sqrt(gamma2);
    d.channels = {l1, l2};
    return SystemSpec(std::move(d));
}

// ----------------------------------------------------------------------------
// Ground / excited classification

StateClassification classify_states(const SystemSpec& spec) {
    const int n = spec.dim();
    const Matrix& h = spec.h_static();
    Matrix off = h;
    off.diagonal().setZero();
    if (max_abs_entry(off) > hermiticity_tolerance) {
        throw Error(ErrorKind::non_diagonal_static_hamiltonian,
                    "h_static has off-diagonal entries up to " + std::to_string(max_abs_entry(off)));
    }

    StateClassification out;
    out.energies.resize(static_cast<std::size_t>(n));
    std::vector<bool> annihilated(static_cast<std::size_t>(n), true);
    for (int i = 0; i < n; ++i) {
        out.energies[static_cast<std::size_t>(i)] = h(i, i).real();
        for (const auto& l : spec.channels()) {
            if (l.col(i).norm() >= hermiticity_tolerance) annihilated[static_cast<std::size_t>(i)] = false;
        }
        (annihilated[static_cast<std::size_t>(i)] ? out.ground_indices : out.excited_indices).push_back(i);
    }

    // Within each degenerate eigenspace the common kernel of the couplings
    // must be spanned by basis vectors, otherwise the split is basis dependent.
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n; ++i) {
        if (seen[static_cast<std::size_t>(i)]) continue;
        std::vector<int> block;
        for (int j = i; j < n; ++j) {
            if (std::abs(out.energies[static_cast<std::size_t>(j)] - out.energies[static_cast<std::size_t>(i)]) <=
                hermiticity_tolerance) {
                block.push_back(j);
                seen[static_cast<std::size_t>(j)] = true;
            }
        }
        if (block.size() < 2) continue;
        Matrix stacked(static_cast<Eigen::Index>(n * spec.n_channels()), static_cast<Eigen::Index>(block.size()));
        for (int mu = 0; mu < spec.n_channels(); ++mu) {
            for (std::size_t c = 0; c < block.size(); ++c) {
                stacked.block(mu * n, static_cast<Eigen::Index>(c), n, 1) = spec.channel(mu).col(block[c]);
            }
        }
        Eigen::JacobiSVD<Matrix> svd(stacked);
        const auto& sv = svd.singularValues();
        long rank = 0;
        for (Eigen::Index k = 0; k < sv.size(); ++k) {
            if (sv(k) >= hermiticity_tolerance) ++rank;
        }
        const long nullity = static_cast<long>(block.size()) - rank;
        const long ground_in_block =
            std::count_if(block.begin(), block.end(), [&](int k) { return annihilated[static_cast<std::size_t>(k)]; });
        if (nullity != ground_in_block) {
            throw Error(ErrorKind::ambiguous_state,
                        "a superposition of degenerate basis states near index " + std::to_string(i) +
                            " is annihilated by every coupling operator but no basis state is");
        }
    }

    if (out.ground_indices.empty()) {
        throw Error(ErrorKind::ambiguous_state, "no basis state is annihilated by every coupling operator");
    }
    return out;
}

// ----------------------------------------------------------------------------
// JSON

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json flat = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back({m(r, c).real(), m(r, c).imag()});
    }
    return flat;
}

namespace {

Complex complex_from_json(const nlohmann::json& j, const std::string& where) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
        return {j[0].get<double>(), j[1].get<double>()};
    }
    throw Error(ErrorKind::config_invalid, where + ": complex entries must be [re, im] pairs or numbers");
}

} // namespace

Matrix matrix_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw Error(ErrorKind::config_invalid, where + ": expected a non-empty array");
    // Nested rows: [[[re,im], ...], ...]
    const bool nested = j[0].is_array() && !j[0].empty() && j[0][0].is_array();
    if (nested) {
        const auto rows = static_cast<Eigen::Index>(j.size());
        const auto cols = static_cast<Eigen::Index>(j[0].size());
        Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) {
                throw Error(ErrorKind::dimension_mismatch, where + ": ragged matrix rows");
            }
            for (Eigen::Index c = 0; c < cols; ++c) {
                m(r, c) = complex_from_json(j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)], where);
            }
        }
        return m;
    }
    // Flat row-major list of entries.
    const auto count = static_cast<long>(j.size());
    const auto n = static_cast<long>(std::lround(std::sqrt(static_cast<double>(count))));
    if (n * n != count) {
        throw Error(ErrorKind::dimension_mismatch, where + ": " + std::to_string(count) + " entries is not a square");
    }
    Matrix m(n, n);
    for (long k = 0; k < count; ++k) m(k / n, k % n) = complex_from_json(j[static_cast<std::size_t>(k)], where);
    return m;
}

namespace {

PulseEnvelope envelope_from_json(const nlohmann::json& j, const std::string& where) {
    const std::string kind = j.value("kind", "zero");
    if (kind == "zero") return PulseEnvelope::zero();
    if (kind == "rectangular") {
        for (const char* key : {"omega0", "t_start", "t_end"}) {
            if (!j.contains(key)) throw Error(ErrorKind::config_invalid, where + "." + key + " required");
        }
        return PulseEnvelope::rectangular(j.at("omega0").get<double>(), j.at("t_start").get<double>(),
                                          j.at("t_end").get<double>());
    }
    if (kind == "tabulated") {
        if (!j.contains("samples")) throw Error(ErrorKind::config_invalid, where + ".samples required");
        std::vector<std::pair<double, double>> samples;
        for (const auto& s : j.at("samples")) samples.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
        return PulseEnvelope::tabulated(std::move(samples));
    }
    throw Error(ErrorKind::config_invalid, where + ".kind must be zero|rectangular|tabulated, got '" + kind + "'");
}

nlohmann::json envelope_to_json(const PulseEnvelope& e) {
    switch (e.kind()) {
    case PulseEnvelope::Kind::zero: return {{"kind", "zero"}};
    case PulseEnvelope::Kind::rectangular:
        return {{"kind", "rectangular"}, {"omega0", e.amplitude()}, {"t_start", e.t_start()}, {"t_end", e.t_end()}};
    case PulseEnvelope::Kind::tabulated: {
        nlohmann::json samples = nlohmann::json::array();
        for (const auto& s : e.samples()) samples.push_back({s.first, s.second});
        return {{"kind", "tabulated"}, {"samples", samples}};
    }
    }
    return {};
}

} // namespace

SystemSpec build_system(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorKind::config_invalid, "system description must be a JSON object");
    if (!j.contains("dim")) throw Error(ErrorKind::config_invalid, "dim required");
    SystemDescription d;
    d.dim = j.at("dim").get<int>();
    if (j.contains("labels")) d.labels = j.at("labels").get<std::vector<std::string>>();
    if (!j.contains("h_static")) throw Error(ErrorKind::config_invalid, "h_static required");
    d.h_static = matrix_from_json(j.at("h_static"), "h_static");
    if (j.contains("drives")) {
        std::size_t i = 0;
        for (const auto& dj : j.at("drives")) {
            const std::string where = "drives[" + std::to_string(i++) + "]";
            if (!dj.contains("matrix")) throw Error(ErrorKind::config_invalid, where + ".matrix required");
            d.drives.push_back({matrix_from_json(dj.at("matrix"), where + ".matrix"),
                                envelope_from_json(dj.value("envelope", nlohmann::json::object()),
                                                   where + ".envelope")});
        }
    }
    if (!j.contains("channels")) throw Error(ErrorKind::config_invalid, "channels required");
    std::size_t i = 0;
    for (const auto& cj : j.at("channels")) {
        const std::string where = "channels[" + std::to_string(i++) + "]";
        if (cj.is_object()) {
            // rate + bare operator form: L = sqrt(rate) * operator
            if (!cj.contains("rate")) throw Error(ErrorKind::config_invalid, where + ".rate required");
            if (!cj.contains("operator")) throw Error(ErrorKind::config_invalid, where + ".operator required");
            const double rate = cj.at("rate").get<double>();
            if (rate < 0.0) throw Error(ErrorKind::negative_rate, where + ".rate < 0");
            d.channels.push_back(std::sqrt(rate) * matrix_from_json(cj.at("operator"), where + ".operator"));
        } else {
            d.channels.push_back(matrix_from_json(cj, where));
        }
    }
    return build_system(std::move(d));
}

nlohmann::json to_json(const SystemSpec& spec) {
    nlohmann::json j;
    j["dim"] = spec.dim();
    j["labels"] = spec.labels();
    j["h_static"] = matrix_to_json(spec.h_static());
    j["drives"] = nlohmann::json::array();
    for (const auto& d : spec.drives()) {
        j["drives"].push_back({{"matrix", matrix_to_json(d.matrix)}, {"envelope", envelope_to_json(d.envelope)}});
    }
    j["channels"] = nlohmann::json::array();
    for (const auto& l : spec.channels()) j["channels"].push_back(matrix_to_json(l));
    return j;
}

} // namespace fewphoton
