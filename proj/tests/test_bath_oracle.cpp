#include "fewphoton/bath_oracle.hpp"
#include "fewphoton/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fewphoton;

namespace {

ErrorKind kind_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an engine error");
    return ErrorKind::invalid_argument;
}

double sector_p(const SectorProbabilities& p, int photons, int system) {
    auto it = p.find({photons, system});
    return it == p.end() ? 0.0 : it->second;
}

GreenQuery survival(double tau) {
    GreenQuery q;
    q.bra = 1;
    q.ket = 1;
    q.window_lo = 0.0;
    q.window_hi = tau;
    return q;
}

} // namespace

TEST_CASE("composite dimensions") {
    CHECK(build_lattice(make_tls(0.0, 0.0, 0.0, {1.0}), 0.1, 4).nominal_dimension == 32.0);
    // Single coupled channel: the lambda system with only the second channel.
    SystemDescription d;
    d.dim = 3;
    d.h_static = Matrix::Zero(3, 3);
    Matrix l = Matrix::Zero(3, 3);
    l(1, 2) = 1.0;
    d.channels = {l};
    CHECK(build_lattice(build_system(d), 0.1, 3).nominal_dimension == 24.0);
    CHECK(build_lattice(make_tls(0.0, 0.0, 0.0, {1.0}), 0.1, 10, 2).nominal_dimension == 118098.0);
    CHECK(build_lattice(make_tls(0.0, 0.0, 0.0, {1.0}), 0.1, 2).local_dim == 4);
}

TEST_CASE("dimension guard") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {1.0});
    CHECK(kind_of([&] { (void)build_lattice(spec, 0.1, 30); }) == ErrorKind::dimension_guard_exceeded);
    // A total-photon cap brings the effective dimension under the guard.
    const auto capped = build_lattice(spec, 0.1, 30, 1, 1);
    CHECK(capped.effective_dimension == 62.0);
}

TEST_CASE("zero coupling reduces to the bare system") {
    const auto spec = make_tls(0.3, 2.0, 1.0, {0.0});
    const auto lat = build_lattice(spec, 0.1, 20);
    GreenQuery q;
    q.bra = 1;
    q.ket = 0;
    q.window_lo = 0.0;
    q.window_hi = 2.0;
    CHECK(std::abs(oracle_green(lat, q) - green(spec, q)) < 1e-12);
}

TEST_CASE("survival amplitude converges at first order") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {1.0});
    const double tau = 2.0;
    const Complex exact = std::exp(-0.5 * tau);
    const double e1 = std::abs(oracle_green(build_lattice(spec, 0.05, 40, 1, 0), survival(tau)) - exact);
    const double e2 = std::abs(oracle_green(build_lattice(spec, 0.025, 80, 1, 0), survival(tau)) - exact);
    CHECK(e1 / std::abs(exact) < 0.03);
    CHECK(e2 / e1 == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("lattice evolution is unitary") {
    const auto spec = make_tls(0.0, 3.0, 1.0, {1.0});
    const auto lat = build_lattice(spec, 0.1, 20);
    auto state = OracleState::vacuum(2, 0);
    oracle_evolve(lat, state, 0.0, 2.0);
    CHECK(state.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(state.truncated_norm == 0.0);
}

TEST_CASE("spontaneous emission on the lattice") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {1.0});
    const auto lat = build_lattice(spec, 0.02, 200, 1, 1);
    const auto p = oracle_emission_probabilities(lat, 1, 4.0);
    CHECK(std::abs(sector_p(p, 0, 1) - std::exp(-4.0)) < 2e-3);
    CHECK(std::abs(sector_p(p, 1, 0) - (1.0 - std::exp(-4.0))) < 2e-3);
}

TEST_CASE("area-pi pulse matches the continuum emission probabilities") {
    const double tp = 1.0;
    const auto spec = make_tls(0.0, std::numbers::pi / pulse_area(1.0, tp), tp, {1.0});
    const auto lat = build_lattice(spec, 0.05, 100, 1, 3);
    const auto oracle = oracle_emission_probabilities(lat, 0, 5.0);
    const auto exact = emission_probabilities(spec, 0, 5.0, 3);
    for (int n = 0; n <= 2; ++n) {
        for (int s = 0; s < 2; ++s) {
            INFO("photons " << n << " system " << s);
            CHECK(std::abs(sector_p(oracle, n, s) - sector_p(exact, n, s)) < 2e-2);
        }
    }
}

TEST_CASE("misaligned times are rejected") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {1.0});
    const auto lat = build_lattice(spec, 0.1, 10);
    auto state = OracleState::vacuum(2, 1);
    CHECK(kind_of([&] { oracle_evolve(lat, state, 0.0, 0.55); }) == ErrorKind::misaligned_interval);
    GreenQuery q = survival(1.0);
    q.bra = 0;
    q.annihilations = {{0.33, 0}};
    CHECK(kind_of([&] { (void)oracle_green(lat, q); }) == ErrorKind::misaligned_insertion);
    const double spacings[] = {0.3};
    CHECK(kind_of([&] { (void)oracle_green_extrapolated(spec, survival(1.0), spacings); }) ==
          ErrorKind::misaligned_interval);
}

TEST_CASE("richardson removes polynomial error terms") {
    const auto f = [](double h) { return Complex(2.0, -1.0) + Complex(0.3, 0.2) * h + 0.7 * h * h; };
    const Complex seq[] = {f(0.4), f(0.2), f(0.1)};
    CHECK(std::abs(richardson(seq) - Complex(2.0, -1.0)) < 1e-14);
    const Complex one[] = {Complex(5.0)};
    CHECK(richardson(one) == Complex(5.0));
}

TEST_CASE("extrapolated oracle agrees with green for an emission kernel") {
    const auto spec = make_tls(0.0, 4.0, 1.0, {1.0});
    GreenQuery q;
    q.annihilations = {{1.6, 0}};
    q.creations = {{0.4, 0}};
    q.window_lo = 0.0;
    q.window_hi = 2.4;
    const double spacings[] = {0.08, 0.04, 0.02};
    const Complex g = green(spec, q);
    const Complex o = oracle_green_extrapolated(spec, q, spacings);
    CHECK(std::abs(o - g) / std::abs(g) < 1e-2);
}
