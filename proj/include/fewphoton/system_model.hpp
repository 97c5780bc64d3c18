// system_model.hpp - low-dimensional system description: static Hamiltonian,
// pulsed drive terms and waveguide coupling operators.
//
// Units: hbar = 1, group velocity = 1, so waveguide positions carry units of
// time. All rates are expressed in units of a user-chosen reference rate.

#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <complex>
#include <string>
#include <utility>
#include <vector>

namespace fewphoton {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RowVector = Eigen::RowVectorXcd;

inline constexpr double hermiticity_tolerance = 1e-12;

class PulseEnvelope {
public:
    enum class Kind { zero, rectangular, tabulated };

    PulseEnvelope() = default;

    static PulseEnvelope zero();
    static PulseEnvelope rectangular(double amplitude, double t_start, double t_end);
    // Samples are (time, value) pairs; values are linearly interpolated.
    static PulseEnvelope tabulated(std::vector<std::pair<double, double>> samples);

    double operator()(double t) const;

    Kind kind() const noexcept { return kind_; }
    double amplitude() const noexcept { return amplitude_; }
    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_end_; }
    const std::vector<std::pair<double, double>>& samples() const noexcept { return samples_; }

    bool vanishes() const noexcept;
    // True when the envelope is constant between consecutive breakpoints.
    bool piecewise_constant() const noexcept { return kind_ != Kind::tabulated; }
    std::vector<double> breakpoints() const;

private:
    Kind kind_ = Kind::zero;
    double amplitude_ = 0.0;
    double t_start_ = 0.0;
    double t_end_ = 0.0;
    std::vector<std::pair<double, double>> samples_;
};

struct DriveTerm {
    Matrix matrix;
    PulseEnvelope envelope;
};

// Unvalidated input to build_system().
struct SystemDescription {
    int dim = 0;
    std::vector<std::string> labels;
    Matrix h_static;
    std::vector<DriveTerm> drives;
    std::vector<Matrix> channels;
};

// Immutable, validated system. Safe to share across threads.
class SystemSpec {
public:
    explicit SystemSpec(SystemDescription description);

    int dim() const noexcept { return dim_; }
    int n_channels() const noexcept { return static_cast<int>(channels_.size()); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const Matrix& h_static() const noexcept { return h_static_; }
    const std::vector<DriveTerm>& drives() const noexcept { return drives_; }
    const std::vector<Matrix>& channels() const noexcept { return channels_; }
    const Matrix& channel(int mu) const { return channels_.at(static_cast<std::size_t>(mu)); }

    // H_sys(t) = h_static + sum_i envelope_i(t) * matrix_i
    Matrix hamiltonian(double t) const;
    // sum_mu L_mu^dagger L_mu
    const Matrix& decay_operator() const noexcept { return decay_operator_; }

    bool driven() const noexcept;
    // Sorted, de-duplicated envelope breakpoints of all non-vanishing drives.
    std::vector<double> breakpoints() const;
    // [first, last] time where any drive may be nonzero; {0, 0} when undriven.
    std::pair<double, double> drive_support() const;
    bool drives_piecewise_constant() const noexcept;
    int label_index(const std::string& label) const;

private:
    int dim_;
    std::vector<std::string> labels_;
    Matrix h_static_;
    std::vector<DriveTerm> drives_;
    std::vector<Matrix> channels_;
    Matrix decay_operator_;
};

struct StateClassification {
    std::vector<int> ground_indices;
    std::vector<int> excited_indices;
    std::vector<double> energies; // diagonal of h_static, indexed by basis index

    bool is_ground(int index) const;
};

SystemSpec build_system(SystemDescription raw);
SystemSpec build_system(const nlohmann::json& description);
nlohmann::json to_json(const SystemSpec& spec);

// Coherently driven two-level system, basis (g, e). One channel per rate,
// each coupling through sqrt(rate) |g><e|.
SystemSpec make_tls(double delta_a, double omega0, double t_pulse, const std::vector<double>& rates);

// Lambda system, basis (g1, g2, e). The drive couples g1 <-> e. Channel 0
// couples through sqrt(gamma1) |g1><e|, channel 1 through sqrt(gamma2) |g2><e|.
SystemSpec make_lambda(double delta_e, double delta_12, double omega0, double t_pulse,
                       double gamma1, double gamma2);

StateClassification classify_states(const SystemSpec& spec);

// Pulse area of a rectangular drive coupling through sigma + sigma^dagger;
// a pulse of area A leaves P_e = sin^2(A/2) for an instantaneous pulse.
inline double pulse_area(double omega0, double t_pulse) { return 2.0 * omega0 * t_pulse; }

// Matrix JSON helpers: row-major list of rows, each entry a [re, im] pair.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& where);

} // namespace fewphoton
