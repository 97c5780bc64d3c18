#include "fewphoton/errors.hpp"
#include "fewphoton/system_model.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace fewphoton;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an engine error");
    return ErrorKind::invalid_argument;
}

SystemDescription two_level(double gamma) {
    SystemDescription d;
    d.dim = 2;
    d.h_static = Matrix::Zero(2, 2);
    Matrix l = Matrix::Zero(2, 2);
    l(0, 1) = std::sqrt(gamma);
    d.channels = {l};
    return d;
}

} // namespace

TEST_CASE("tls factory layout") {
    const auto spec = make_tls(0.3, 2.0, 1.5, {0.25, 0.75});
    CHECK(spec.dim() == 2);
    CHECK(spec.n_channels() == 2);
    CHECK(spec.labels() == std::vector<std::string>{"g", "e"});
    CHECK(spec.h_static()(1, 1).real() == doctest::Approx(0.3));
    CHECK(std::abs(spec.channel(1)(0, 1) - std::sqrt(0.75)) < 1e-15);
    // sum L^dagger L = gamma_total |e><e|
    CHECK(std::abs(spec.decay_operator()(1, 1) - 1.0) < 1e-15);
    CHECK(spec.driven());
    const auto [lo, hi] = spec.drive_support();
    CHECK(lo == 0.0);
    CHECK(hi == 1.5);
    // Drive couples through omega0 (sigma + sigma^dagger) inside [0, T_P] only.
    CHECK(std::abs(spec.hamiltonian(0.7)(0, 1) - 2.0) < 1e-15);
    CHECK(std::abs(spec.hamiltonian(1.6)(0, 1)) == 0.0);
}

TEST_CASE("tls without drive is undriven") {
    CHECK_FALSE(make_tls(0.0, 0.0, 2.0, {1.0}).driven());
    CHECK_FALSE(make_tls(0.0, 3.0, 0.0, {1.0}).driven());
}

TEST_CASE("lambda factory keeps both channels") {
    const auto spec = make_lambda(0.0, 0.0, 5.0, 2.0, 0.0, 1.0);
    CHECK(spec.n_channels() == 2);
    CHECK(spec.channel(0).norm() == 0.0);
    CHECK(std::abs(spec.channel(1)(1, 2) - 1.0) < 1e-15);
    CHECK(std::abs(spec.hamiltonian(1.0)(0, 2) - 5.0) < 1e-15);
}

TEST_CASE("validation failures carry kinds") {
    SUBCASE("non hermitian") {
        auto d = two_level(1.0);
        d.h_static(0, 1) = 1.0;
        CHECK(kind_of([&] { (void)build_system(d); }) == ErrorKind::non_hermitian_hamiltonian);
    }
    SUBCASE("dimension mismatch") {
        auto d = two_level(1.0);
        d.channels.push_back(Matrix::Zero(3, 3));
        CHECK(kind_of([&] { (void)build_system(d); }) == ErrorKind::dimension_mismatch);
    }
    SUBCASE("negative rate") {
        CHECK(kind_of([] { (void)make_tls(0.0, 0.0, 0.0, {-1.0}); }) == ErrorKind::negative_rate);
    }
    SUBCASE("no channels") {
        auto d = two_level(1.0);
        d.channels.clear();
        CHECK(kind_of([&] { (void)build_system(d); }) == ErrorKind::dimension_mismatch);
    }
}

TEST_CASE("ground and excited classification") {
    const auto tls = classify_states(make_tls(0.0, 1.0, 1.0, {1.0}));
    CHECK(tls.ground_indices == std::vector<int>{0});
    CHECK(tls.excited_indices == std::vector<int>{1});

    const auto lam = classify_states(make_lambda(0.2, 0.1, 1.0, 1.0, 0.5, 0.5));
    CHECK(lam.ground_indices == std::vector<int>{0, 1});
    CHECK(lam.is_ground(1));
    CHECK_FALSE(lam.is_ground(2));
}

TEST_CASE("identity coupling leaves no ground state") {
    auto d = two_level(1.0);
    d.channels = {Matrix::Identity(2, 2)};
    const auto spec = build_system(d);
    CHECK(kind_of([&] { (void)classify_states(spec); }) == ErrorKind::ambiguous_state);
}

TEST_CASE("degenerate rotated ground state is ambiguous") {
    // Kernel of L is (|0> - |1>)/sqrt 2 inside a degenerate pair.
    SystemDescription d;
    d.dim = 3;
    d.h_static = Matrix::Zero(3, 3);
    d.h_static(2, 2) = 1.0;
    Matrix l = Matrix::Zero(3, 3);
    l(2, 0) = 1.0;
    l(2, 1) = 1.0;
    l(0, 2) = 1.0;
    d.channels = {l};
    const auto spec = build_system(d);
    CHECK(kind_of([&] { (void)classify_states(spec); }) == ErrorKind::ambiguous_state);
}

TEST_CASE("non diagonal static hamiltonian is rejected for classification") {
    auto d = two_level(1.0);
    d.h_static(0, 1) = 0.5;
    d.h_static(1, 0) = 0.5;
    const auto spec = build_system(d);
    CHECK(kind_of([&] { (void)classify_states(spec); }) == ErrorKind::non_diagonal_static_hamiltonian);
}

TEST_CASE("pulse envelopes") {
    const auto rect = PulseEnvelope::rectangular(2.0, 1.0, 3.0);
    CHECK(rect(0.999) == 0.0);
    CHECK(rect(1.0) == 2.0);
    CHECK(rect(3.0) == 2.0);
    CHECK(rect(3.001) == 0.0);
    CHECK(rect.breakpoints() == std::vector<double>{1.0, 3.0});

    const auto tab = PulseEnvelope::tabulated({{0.0, 0.0}, {1.0, 2.0}, {2.0, 0.0}});
    CHECK(tab(0.5) == doctest::Approx(1.0));
    CHECK(tab(1.5) == doctest::Approx(1.0));
    CHECK(tab(-1.0) == 0.0);
    CHECK(tab(5.0) == 0.0);
    CHECK_FALSE(tab.piecewise_constant());

    CHECK(PulseEnvelope::zero().vanishes());
    CHECK(PulseEnvelope::rectangular(0.0, 0.0, 1.0).vanishes());
}

TEST_CASE("pulse area convention") {
    CHECK(pulse_area(2.5, 0.2) == doctest::Approx(1.0));
    CHECK(pulse_area(0.0, 3.0) == 0.0);
}

TEST_CASE("json round trip") {
    const auto spec = make_lambda(0.4, -0.2, 3.0, 1.25, 0.3, 0.7);
    const auto again = build_system(to_json(spec));
    CHECK(again.dim() == 3);
    CHECK(again.labels() == spec.labels());
    CHECK((again.h_static() - spec.h_static()).norm() == 0.0);
    CHECK((again.channel(1) - spec.channel(1)).norm() == 0.0);
    CHECK((again.hamiltonian(0.5) - spec.hamiltonian(0.5)).norm() == 0.0);
}

TEST_CASE("json channel with rate and operator") {
    const nlohmann::json j = {
        {"dim", 2},
        {"h_static", {{{0, 0}, {0, 0}}, {{0, 0}, {1, 0}}}},
        {"channels", {{{"rate", 4.0}, {"operator", {{{0, 0}, {1, 0}}, {{0, 0}, {0, 0}}}}}}},
    };
    const auto spec = build_system(j);
    CHECK(std::abs(spec.channel(0)(0, 1) - 2.0) < 1e-15);
    CHECK(spec.labels() == std::vector<std::string>{"s0", "s1"});

    auto missing = j;
    missing["channels"][0].erase("rate");
    CHECK(kind_of([&] { (void)build_system(missing); }) == ErrorKind::config_invalid);
}
