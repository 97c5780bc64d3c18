#include "fewphoton/errors.hpp"
#include "fewphoton/scattering.hpp"

#include <doctest.h>

#include <cmath>

using namespace fewphoton;

namespace {

// Frozen single-photon transmission of a Gaussian packet (delta0 = 0) through
// an undriven two-level system with gamma_1 = gamma_2 = 1/2. Computed once in
// the frequency domain as int |phi(k)|^2 |t(k)|^2 dk with |t(k)|^2 = 1/4 / (k^2 + 1/4)
// by adaptive quadrature at 30 digits; no engine code involved.
struct FrozenTransmission {
    double width;
    double value;
};
constexpr FrozenTransmission frozen[] = {
    {2.0, 0.757872156141312},
    {8.0, 0.971300864958028},
    {32.0, 0.998058208834743},
};

} // namespace

TEST_CASE("plane-wave response is a Lorentzian") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {0.5, 0.5});
    for (int i = 0; i <= 100; ++i) {
        const double d = -5.0 + 0.1 * i;
        const Complex t01 = plane_wave_response(spec, d, 0, 1);
        const Complex t00 = plane_wave_response(spec, d, 0, 0);
        CHECK(std::abs(std::norm(t01) - 0.25 / (d * d + 0.25)) < 1e-13);
        const Complex expected00 = 1.0 + Complex(0.0, 0.5) / Complex(-d, -0.5);
        CHECK(std::abs(t00 - expected00) < 1e-13);
        // Undriven single-photon scattering is unitary.
        CHECK(std::norm(t00) + std::norm(t01) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("plane-wave response needs an undriven system") {
    const auto spec = make_tls(0.0, 2.0, 1.0, {0.5, 0.5});
    try {
        (void)plane_wave_response(spec, 0.0);
        FAIL("expected DrivenSpecUnsupported");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::driven_spec_unsupported);
    }
}

TEST_CASE("wavepacket transmission matches the frozen frequency-domain values") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {0.5, 0.5});
    double previous = 0.0;
    for (const auto& f : frozen) {
        const auto r = transmit_wavepacket(spec, GaussianPacket{0.0, f.width, 0.0, 0});
        INFO("width " << f.width);
        CHECK(std::abs(r.transmission - f.value) < 5e-5);
        CHECK(std::abs(r.discarded) < 1e-4);
        // Narrower spectra approach the resonant plane-wave value 1.
        CHECK(r.transmission > previous);
        previous = r.transmission;
    }
}

TEST_CASE("no coupling to the output channel means no transmission") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {1.0, 0.0});
    const auto r = transmit_wavepacket(spec, GaussianPacket{0.0, 2.0, 0.0, 0});
    CHECK(r.transmission < 1e-20);
}

TEST_CASE("driven transmission loses single-photon weight") {
    const auto spec = make_tls(0.0, 5.0, 4.0, {0.5, 0.5});
    const auto r = transmit_wavepacket(spec, GaussianPacket{0.0, 2.0, 0.0, 0});
    CHECK(r.transmission >= 0.0);
    CHECK(r.discarded > 0.1);
    CHECK(r.transmission + r.discarded <= 1.0 + 1e-4);
}

TEST_CASE("single-photon scattering kernel closed form") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {0.5, 0.5});
    ScatterQuery q;
    q.out = {{-2.0, 1}};
    q.in = {{0.5, 0}};
    const auto e = scattering_element(spec, q);
    CHECK(e.delta_terms.empty()); // different channels never pair
    // (-i)^2 sqrt(gamma_1 gamma_2) exp(-(t' - t)/2), t = -0.5, t' = 2.
    CHECK(std::abs(e.smooth_value + 0.5 * std::exp(-1.25)) < 1e-13);

    q.out = {{-2.0, 0}};
    const auto same = scattering_element(spec, q);
    REQUIRE(same.delta_terms.size() == 1);
    CHECK(std::abs(same.delta_terms[0].factor - 1.0) < 1e-14);
}

TEST_CASE("scattering elements equal propagator elements over a wide window") {
    const auto spec = make_tls(0.0, 5.0, 2.0, {0.5, 0.5});
    const std::vector<std::pair<std::vector<Coordinate>, std::vector<Coordinate>>> cases{
        {{{-2.5, 1}}, {{0.5, 0}}},
        {{{-1.0, 1}, {-3.0, 0}}, {{0.3, 0}}},
        {{{-0.7, 0}}, {}},
        {{{-3.0, 1}, {-1.2, 1}}, {{-0.5, 0}, {1.0, 1}}},
    };
    for (const auto& [out, in] : cases) {
        const auto s = scattering_element(spec, {out, in, 0, 0});
        const auto p = propagator_element(spec, out, in, 0, 0, -40.0, 40.0);
        CHECK(std::abs(s.smooth_value - p.smooth_value) < 1e-8);
        REQUIRE(s.delta_terms.size() == p.delta_terms.size());
        for (std::size_t i = 0; i < s.delta_terms.size(); ++i) {
            CHECK(std::abs(s.delta_terms[i].factor - p.delta_terms[i].factor) < 1e-8);
        }
    }
}

TEST_CASE("scattering is defined between ground states only") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {1.0});
    ScatterQuery q;
    q.out = {{-1.0, 0}};
    q.in = {{0.0, 0}};
    q.g_n = 1;
    try {
        (void)scattering_element(spec, q);
        FAIL("expected NotGroundState");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::not_ground_state);
    }
}

TEST_CASE("gaussian packet is normalized") {
    const GaussianPacket p{1.5, 2.0, -3.0, 0};
    double sum = 0.0;
    const double h = 0.01;
    for (double x = -40.0; x <= 34.0; x += h) sum += std::norm(p(x)) * h;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
}
