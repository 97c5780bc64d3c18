#include "fewphoton/errors.hpp"
#include "fewphoton/scenario.hpp"

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fewphoton;
using nlohmann::json;

namespace {

bool has(const std::vector<Diagnostic>& ds, Diagnostic::Level level, const std::string& path) {
    for (const auto& d : ds) {
        if (d.level == level && d.path == path) return true;
    }
    return false;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("fewphoton_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

json small_emission() {
    return {{"kind", "tls-emission"},
            {"system", {{"omega0", 2.0}, {"t_pulse", 1.0}, {"channels", {{{"rate", 1.0}}}}}},
            {"times", {{"tau_max", 3.0}, {"points", 7}}},
            {"grid", {{"dx_map", 0.1}}}};
}

} // namespace

TEST_CASE("missing rate is an error at the channel path") {
    const json c = {{"kind", "tls-emission"}, {"system", {{"channels", {json::object()}}}}};
    const auto ds = validate_config(c);
    REQUIRE(has(ds, Diagnostic::Level::error, "system.channels[0].rate"));
    for (const auto& d : ds) {
        if (d.path == "system.channels[0].rate") CHECK(d.message == "channels[0].rate required");
    }
    CHECK_THROWS_AS(resolve_config(c), Error);
}

TEST_CASE("valid configs produce no diagnostics") {
    const json lambda = {{"kind", "lambda-emission"},
                         {"system", {{"omega0", 5.0}, {"t_pulse", 2.0}, {"channels", {{{"rate", 0.0}}, {{"rate", 1.0}}}}}}};
    CHECK(validate_config(lambda).empty());
    CHECK(validate_config(small_emission()).empty());
}

TEST_CASE("warnings for narrow packets, coarse grids and unknown keys") {
    json c = {{"kind", "tls-scattering"},
              {"system", {{"channels", {{{"rate", 0.5}}, {{"rate", 0.5}}}}}},
              {"packet", {{"width", 0.1}}},
              {"grid", {{"dx", 0.2}}},
              {"colour", "blue"}};
    const auto ds = validate_config(c);
    CHECK(has(ds, Diagnostic::Level::warning, "packet.width"));
    CHECK(has(ds, Diagnostic::Level::warning, "grid.dx"));
    CHECK(has(ds, Diagnostic::Level::warning, "colour"));
    for (const auto& d : ds) CHECK(d.level == Diagnostic::Level::warning);
}

TEST_CASE("structural errors") {
    CHECK(has(validate_config(json::object()), Diagnostic::Level::error, "kind"));
    CHECK(has(validate_config({{"kind", "tls-teleport"}, {"system", json::object()}}), Diagnostic::Level::error, "kind"));
    const json one_channel = {{"kind", "tls-scattering"}, {"system", {{"channels", {{{"rate", 1.0}}}}}}};
    CHECK(has(validate_config(one_channel), Diagnostic::Level::error, "system.channels"));
    json bad_sweep = small_emission();
    bad_sweep["sweep"] = {{"variable", "delta_a"}};
    CHECK_FALSE(validate_config(bad_sweep).empty());
}

TEST_CASE("resolved config carries every default") {
    const json r = resolve_config({{"kind", "tls-scattering"}, {"system", {{"channels", {{{"rate", 0.5}}, {{"rate", 0.5}}}}}}});
    CHECK(r["system"]["omega0"] == 5.0);
    CHECK(r["system"]["t_pulse"] == 4.0);
    CHECK(r["packet"]["width"] == 2.0);
    CHECK(r["packet"]["x0"] == 0.0);
    CHECK(r["sweep"]["points"] == 161);
    CHECK(r["tp_sweep"]["points"] == 81);
    CHECK(r["grid"]["dx"] == 0.02);
    CHECK(r["oracle"]["spacings"] == json::array({0.08, 0.04, 0.02}));
    CHECK(r["output"] == "tls-scattering");

    const json scaled = resolve_config(small_emission(), 2.0);
    CHECK(scaled["grid"]["dx_map"].get<double>() == doctest::Approx(0.2));
    CHECK(scaled["grid"]["grid_scale"] == 2.0);
}

TEST_CASE("csv formatting") {
    const Table t{{"a", "b"}, {{0.1, -0.0}, {1.0 / 3.0, 1e-20}}};
    CHECK(format_csv(t) == "a,b\n0.1,0\n0.333333333333,1e-20\n");
}

TEST_CASE("emission run writes documented files and is thread-count independent") {
    const auto one = scratch_dir("one");
    const auto many = scratch_dir("many");
    const auto a = run_scenario(small_emission(), {one, 1, 1.0});
    const auto b = run_scenario(small_emission(), {many, 4, 1.0});
    REQUIRE(a.files.size() == 3);
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        CHECK(a.files[i].filename() == b.files[i].filename());
        if (a.files[i].extension() == ".csv") CHECK(slurp(a.files[i]) == slurp(b.files[i]));
    }
    const std::string ts = slurp(one / "tls-emission" / "emission_time_series.csv");
    CHECK(ts.rfind("tau,P0g,P1g,P2g,P0e,P1e,P2e,closure_deficit\n", 0) == 0);
    const std::string st = slurp(one / "tls-emission" / "emission_spacetime.csv");
    CHECK(st.rfind("tau,x,channel,abs2\n", 0) == 0);
    CHECK(a.manifest["code_version"] == code_version);
    CHECK(a.manifest["resolved_config"]["system"]["initial"] == "g");
    CHECK(a.manifest["threads"] == 1);
    std::filesystem::remove_all(one);
    std::filesystem::remove_all(many);
}

TEST_CASE("outputs that do not fit the kind are rejected") {
    json c = small_emission();
    c["outputs"] = {"spectrum"};
    const auto dir = scratch_dir("bad_output");
    try {
        (void)run_scenario(c, {dir, 1, 1.0});
        FAIL("expected ConfigInvalid");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config_invalid);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("parallel_for covers every index once and rethrows the first failure") {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 6, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) CHECK(h.load() == 1);

    try {
        parallel_for(100, 4, [](std::size_t i) {
            if (i == 17 || i == 60) throw std::runtime_error(std::to_string(i));
        });
        FAIL("expected a rethrow");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "17");
    }
}

TEST_CASE("thread count falls back to the environment") {
    CHECK(resolve_threads(3) == 3);
    ::setenv("FEWPHOTON_THREADS", "5", 1);
    CHECK(resolve_threads(0) == 5);
    ::unsetenv("FEWPHOTON_THREADS");
    CHECK(resolve_threads(0) >= 1);
}

TEST_CASE("random queries are reproducible and aligned") {
    const auto spec = make_lambda(0.0, 0.0, 3.0, 1.0, 0.5, 0.5);
    const auto a = random_green_queries(spec, 10, 42);
    const auto b = random_green_queries(spec, 10, 42);
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].window_hi == b[i].window_hi);
        CHECK(std::abs(green(spec, a[i]) - green(spec, b[i])) == 0.0);
        CHECK(std::abs(green(spec, a[i])) >= 1e-3);
        const double bins = a[i].window_hi / 0.08;
        CHECK(std::abs(bins - std::round(bins)) < 1e-9);
    }
}

TEST_CASE("linspace endpoints") {
    const auto v = linspace(-1.0, 1.0, 5);
    CHECK(v.front() == -1.0);
    CHECK(v.back() == 1.0);
    CHECK(v[2] == 0.0);
    CHECK(linspace(3.0, 4.0, 1) == std::vector<double>{3.0});
}
