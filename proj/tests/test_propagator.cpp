#include "fewphoton/errors.hpp"
#include "fewphoton/propagator.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

using namespace fewphoton;

namespace {

// Partial matchings between output and input slots with equal channels,
// counted per k by plain recursion.
void count_matchings(const std::vector<int>& out, const std::vector<int>& in, std::size_t a, std::vector<bool>& used,
                     int k, std::vector<int>& counts) {
    if (a == out.size()) {
        ++counts[static_cast<std::size_t>(k)];
        return;
    }
    count_matchings(out, in, a + 1, used, k, counts);
    for (std::size_t b = 0; b < in.size(); ++b) {
        if (used[b] || in[b] != out[a]) continue;
        used[b] = true;
        count_matchings(out, in, a + 1, used, k + 1, counts);
        used[b] = false;
    }
}

double sector_p(const SectorProbabilities& p, int photons, int system) {
    auto it = p.find({photons, system});
    return it == p.end() ? 0.0 : it->second;
}

} // namespace

TEST_CASE("pairing enumeration matches brute-force matching counts") {
    const std::vector<std::pair<std::vector<int>, std::vector<int>>> cases{
        {{0, 0}, {0, 0}}, {{0, 1, 1}, {1, 0, 1}}, {{0, 0, 0}, {0, 0}}, {{1}, {0, 0}}, {{}, {0, 1}}};
    for (const auto& [out, in] : cases) {
        std::vector<int> expected(std::min(out.size(), in.size()) + 1, 0);
        std::vector<bool> used(in.size(), false);
        count_matchings(out, in, 0, used, 0, expected);

        std::vector<int> got(expected.size(), 0);
        for (const auto& t : enumerate_pairings(out, in)) {
            ++got[static_cast<std::size_t>(t.k)];
            const int p = static_cast<int>(out.size() + in.size()) - 2 * t.k;
            Complex c = 1.0;
            for (int i = 0; i < p; ++i) c *= Complex(0.0, -1.0);
            CHECK(std::abs(t.coefficient - c) < 1e-15);
            CHECK(t.unpaired_out.size() + t.pairs.size() == out.size());
            CHECK(t.unpaired_in.size() + t.pairs.size() == in.size());
            for (auto [a, b] : t.pairs) CHECK(out[static_cast<std::size_t>(a)] == in[static_cast<std::size_t>(b)]);
        }
        CHECK(got == expected);
    }
}

TEST_CASE("vacuum element of an undriven ground state is one") {
    const auto spec = make_tls(0.3, 0.0, 0.0, {1.0});
    const auto e = propagator_element(spec, {}, {}, 0, 0, 0.0, 5.0);
    CHECK(e.delta_terms.empty());
    CHECK(std::abs(e.smooth_value - 1.0) < 1e-14);
}

TEST_CASE("single-photon element of a two-level system") {
    const double gamma = 1.4;
    const auto spec = make_tls(0.0, 0.0, 0.0, {gamma});
    const std::vector<Coordinate> out{{-1.5, 0}};
    const std::vector<Coordinate> in{{-0.5, 0}};
    const auto e = propagator_element(spec, out, in, 0, 0, 0.0, 3.0);
    REQUIRE(e.delta_terms.size() == 1);
    CHECK(std::abs(e.delta_terms[0].factor - 1.0) < 1e-14);
    // (-i)^2 gamma exp(-gamma (t' - t) / 2) with t = 0.5, t' = 1.5.
    CHECK(std::abs(e.smooth_value + gamma * std::exp(-gamma * 0.5)) < 1e-13);

    // The input photon reaches the system after the window closes.
    const std::vector<Coordinate> late{{-3.5, 0}};
    CHECK(std::abs(propagator_element(spec, out, late, 0, 0, 0.0, 3.0).smooth_value) == 0.0);
    CHECK_THROWS_AS((void)propagator_element(spec, out, in, 0, 0, 2.0, 1.0), Error);
}

TEST_CASE("emission from the excited state on a grid") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {1.0});
    const double tau = 4.0;
    const auto state = emission_state(spec, 1, tau, 0.01, 1);
    const auto p = probabilities(state);
    CHECK(std::abs(sector_p(p, 0, 1) - std::exp(-tau)) < 1e-10);
    CHECK(std::abs(sector_p(p, 1, 0) - (1.0 - std::exp(-tau))) < 1e-4);

    // Amplitude of the photon emitted at time t sits at x = -t.
    const auto* amp = state.find({0, {0}});
    REQUIRE(amp);
    const auto& grid = state.grid();
    for (std::size_t i = 0; i < grid.n; i += 37) {
        const double t = -grid.x(i);
        const Complex expected = Complex(0.0, -1.0) * std::exp(-0.5 * t);
        CHECK(std::abs((*amp)[i] - expected) < 1e-12);
    }
}

TEST_CASE("grid route agrees with the exact nested route for a driven system") {
    const auto spec = make_tls(0.0, 5.0, 2.0, {1.0});
    const double tau = 4.0;
    const auto grid = probabilities(emission_state(spec, 0, tau, 0.02, 2));
    const auto exact = emission_probabilities(spec, 0, tau, 2);
    for (const auto& [key, value] : exact) {
        INFO("photons " << key.first << " system " << key.second);
        CHECK(std::abs(sector_p(grid, key.first, key.second) - value) < 3e-4);
    }
}

TEST_CASE("exact route reproduces spontaneous decay") {
    const auto spec = make_tls(0.2, 0.0, 0.0, {1.0});
    for (double tau : {0.5, 1.0, 3.0}) {
        const auto p = emission_probabilities(spec, 1, tau, 2);
        CHECK(std::abs(sector_p(p, 0, 1) - std::exp(-tau)) < 1e-12);
        CHECK(std::abs(sector_p(p, 1, 0) - (1.0 - std::exp(-tau))) < 1e-12);
        CHECK(sector_p(p, 2, 0) < 1e-15);
    }
}

TEST_CASE("pi pulse in the short-pulse limit emits one photon") {
    const double tp = 0.01;
    const auto spec = make_tls(0.0, std::numbers::pi / pulse_area(1.0, tp), tp, {1.0});
    const auto p = emission_probabilities(spec, 0, 20.0, 2);
    CHECK(sector_p(p, 1, 0) > 0.99);
    // Three-photon weight of a 1% pulse is below 1e-6.
    CHECK(std::abs(total_probability(p) - 1.0) < 1e-6);
}

TEST_CASE("composition of consecutive windows") {
    const auto spec = make_tls(0.0, 3.0, 1.0, {1.0});
    const double tau = 2.0;
    const auto grid = emission_grid(tau, 0.05);
    const auto vac = WavepacketState::vacuum(grid, 0);
    PropagationOptions opt;
    opt.n_max = 2;
    const auto whole = apply_propagator(spec, vac, 0.0, tau, opt);
    const auto half = apply_propagator(spec, apply_propagator(spec, vac, 0.0, 1.0, opt), 1.0, tau, opt);
    for (const auto& [key, amp] : whole.sectors()) {
        const auto* other = half.find(key);
        REQUIRE(other);
        double diff = 0.0;
        for (std::size_t i = 0; i < amp.size(); ++i) diff = std::max(diff, std::abs(amp[i] - (*other)[i]));
        CHECK(diff < 2e-3);
    }
}

TEST_CASE("photons outside the window pass through unchanged") {
    const auto spec = make_tls(0.0, 0.0, 0.0, {1.0});
    const UniformGrid grid{-6.0, 0.05, 121};
    WavepacketState in(grid);
    auto& amp = in.sector({0, {0}});
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = grid.x(i);
        // Support in x in [-6, -4]: Green times 4..6, after the window [0, 2].
        amp[i] = x < -4.0 ? Complex(std::sin(x), 0.3) : Complex(0.0);
    }
    const auto out = apply_propagator(spec, in, 0.0, 2.0, {1, nullptr});
    const auto* got = out.find({0, {0}});
    REQUIRE(got);
    for (std::size_t i = 0; i < grid.n; ++i) CHECK(std::abs((*got)[i] - amp[i]) < 1e-14);
    CHECK(out.find({1, {}}) == nullptr);
}

TEST_CASE("two-photon amplitudes are exchange symmetric") {
    const auto spec = make_tls(0.0, 4.0, 1.0, {1.0});
    const auto state = emission_state(spec, 0, 2.0, 0.1, 2);
    const auto* amp = state.find({0, {0, 0}});
    REQUIRE(amp);
    const std::size_t n = state.grid().n;
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) asym = std::max(asym, std::abs((*amp)[i * n + j] - (*amp)[j * n + i]));
    }
    CHECK(asym == 0.0);
}

TEST_CASE("lambda system closes on all sectors") {
    const auto spec = make_lambda(0.0, 0.0, 5.0, 2.0, 0.0, 1.0);
    const auto p = emission_probabilities(spec, 0, 10.0, 2);
    CHECK(std::abs(total_probability(p) - 1.0) < 1e-9);
    // Only one photon can leave through the g2 channel.
    CHECK(sector_p(p, 2, 0) + sector_p(p, 2, 1) < 1e-14);
}

TEST_CASE("truncation shows up as a closure deficit") {
    const auto spec = make_tls(0.0, 5.0, 2.0, {1.0});
    const auto p = emission_probabilities(spec, 0, 6.0, 1);
    CHECK(1.0 - total_probability(p) > 1e-2);
    const auto p3 = emission_probabilities(spec, 0, 6.0, 6);
    CHECK(1.0 - total_probability(p3) < 1.0 - total_probability(p));
}

TEST_CASE("schroedinger picture shifts coordinates") {
    const auto grid = emission_grid(2.0, 0.1);
    const auto moved = to_schrodinger(WavepacketState::vacuum(grid, 0), 2.0);
    CHECK(moved.grid().x_min == doctest::Approx(0.0));
    CHECK(moved.grid().x_max() == doctest::Approx(2.0));
}

TEST_CASE("error conditions") {
    const auto spec = make_tls(0.0, 20.0, 1.0, {1.0});
    SUBCASE("coarse grid") {
        CHECK_THROWS_AS((void)probabilities(emission_state(spec, 0, 2.0, 0.25, 1)), Error);
        try {
            (void)probabilities(emission_state(spec, 0, 2.0, 0.25, 1));
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::grid_too_coarse);
        }
    }
    SUBCASE("input above n_max") {
        const UniformGrid grid{-1.0, 0.1, 11};
        WavepacketState in(grid);
        in.sector({0, {0, 0}});
        try {
            (void)apply_propagator(spec, in, 0.0, 1.0, {1, nullptr});
            FAIL("expected TruncationOverflow");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::truncation_overflow);
        }
    }
    SUBCASE("oversized tensor") {
        WavepacketState big(UniformGrid{0.0, 1e-4, 20000});
        CHECK_THROWS_AS(big.sector({0, {0, 0}}), Error);
    }
}
