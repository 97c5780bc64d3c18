// Python bindings. JSON crosses the boundary as text; the package wrapper
// converts dicts with the json module.

#include "fewphoton/bath_oracle.hpp"
#include "fewphoton/errors.hpp"
#include "fewphoton/propagator.hpp"
#include "fewphoton/scattering.hpp"
#include "fewphoton/scenario.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace fewphoton;

namespace {

std::vector<Insertion> insertions(const std::vector<std::pair<double, int>>& v) {
    std::vector<Insertion> out;
    for (auto [t, mu] : v) out.push_back({t, mu});
    return out;
}

py::dict sector_dict(const SectorProbabilities& p) {
    py::dict d;
    for (const auto& [k, v] : p) d[py::make_tuple(k.first, k.second)] = v;
    return d;
}

} // namespace

PYBIND11_MODULE(_fewphoton, m) {
    m.doc() = "few-photon propagator and scattering engine";
    m.attr("__version__") = code_version;

    // Module-lifetime reference; `kind` holds the ErrorKind name.
    static PyObject* error_type = PyErr_NewException("fewphoton._fewphoton.EngineError", PyExc_RuntimeError, nullptr);
    m.add_object("EngineError", py::reinterpret_borrow<py::object>(error_type));
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            PyErr_SetObject(error_type, exc.ptr());
        }
    });

    py::class_<SystemSpec>(m, "SystemSpec")
        .def_property_readonly("dim", &SystemSpec::dim)
        .def_property_readonly("n_channels", &SystemSpec::n_channels)
        .def_property_readonly("labels", &SystemSpec::labels)
        .def("hamiltonian", &SystemSpec::hamiltonian, py::arg("t"))
        .def("channel", [](const SystemSpec& s, int mu) { return Matrix(s.channel(mu)); }, py::arg("mu"))
        .def("to_json", [](const SystemSpec& s) { return to_json(s).dump(); });

    m.def("make_tls", &make_tls, py::arg("delta_a"), py::arg("omega0"), py::arg("t_pulse"), py::arg("rates"));
    m.def("make_lambda", &make_lambda, py::arg("delta_e"), py::arg("delta_12"), py::arg("omega0"), py::arg("t_pulse"),
          py::arg("gamma1"), py::arg("gamma2"));
    m.def("_system_from_json", [](const std::string& text) { return build_system(nlohmann::json::parse(text)); });
    m.def("pulse_area", &pulse_area, py::arg("omega0"), py::arg("t_pulse"));

    m.def("u_eff", [](const SystemSpec& s, double a, double b) { return u_eff(s, a, b); }, py::arg("spec"),
          py::arg("t_from"), py::arg("t_to"));

    m.def(
        "green",
        [](const SystemSpec& s, const std::vector<std::pair<double, int>>& annihilations,
           const std::vector<std::pair<double, int>>& creations, int bra, int ket, double lo, double hi) {
            GreenQuery q{insertions(annihilations), insertions(creations), bra, ket, lo, hi};
            return green(s, q);
        },
        py::arg("spec"), py::arg("annihilations"), py::arg("creations"), py::arg("bra"), py::arg("ket"),
        py::arg("window_lo"), py::arg("window_hi"));

    m.def(
        "oracle_green",
        [](const SystemSpec& s, const std::vector<std::pair<double, int>>& annihilations,
           const std::vector<std::pair<double, int>>& creations, int bra, int ket, double lo, double hi,
           const std::vector<double>& spacings) {
            GreenQuery q{insertions(annihilations), insertions(creations), bra, ket, lo, hi};
            return oracle_green_extrapolated(s, q, spacings);
        },
        py::arg("spec"), py::arg("annihilations"), py::arg("creations"), py::arg("bra"), py::arg("ket"),
        py::arg("window_lo"), py::arg("window_hi"), py::arg("spacings") = std::vector<double>{0.08, 0.04, 0.02});

    m.def(
        "emission_probabilities",
        [](const SystemSpec& s, int initial, double tau, int n_max) {
            return sector_dict(emission_probabilities(s, initial, tau, n_max));
        },
        py::arg("spec"), py::arg("initial"), py::arg("tau"), py::arg("n_max") = 2);

    m.def(
        "grid_emission_probabilities",
        [](const SystemSpec& s, int initial, double tau, double dx, int n_max) {
            return sector_dict(probabilities(emission_state(s, initial, tau, dx, n_max)));
        },
        py::arg("spec"), py::arg("initial"), py::arg("tau"), py::arg("dx") = 0.02, py::arg("n_max") = 2);

    m.def("plane_wave_response", &plane_wave_response, py::arg("spec"), py::arg("delta"), py::arg("in_channel") = 0,
          py::arg("out_channel") = 1, py::arg("g_n") = -1, py::arg("g_m") = -1);

    m.def(
        "transmit_wavepacket",
        [](const SystemSpec& s, double delta0, double width, double x0, int in_channel, int out_channel, double dx) {
            TransmissionOptions opt;
            opt.out_channel = out_channel;
            opt.dx = dx;
            const auto r = transmit_wavepacket(s, GaussianPacket{delta0, width, x0, in_channel}, opt);
            std::vector<double> xs(r.grid.n);
            for (std::size_t i = 0; i < r.grid.n; ++i) xs[i] = r.grid.x(i);
            py::dict d;
            d["x"] = xs;
            d["psi_out"] = r.psi_out;
            d["transmission"] = r.transmission;
            d["discarded"] = r.discarded;
            return d;
        },
        py::arg("spec"), py::arg("delta0") = 0.0, py::arg("width") = 2.0, py::arg("x0") = 0.0,
        py::arg("in_channel") = 0, py::arg("out_channel") = 1, py::arg("dx") = 0.02);

    m.def("_validate_config", [](const std::string& text) {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& d : validate_config(nlohmann::json::parse(text))) {
            out.emplace_back(d.level == Diagnostic::Level::error ? "error" : "warning", d.path, d.message);
        }
        return out;
    });
    m.def("_resolve_config", [](const std::string& text, double scale) {
        return resolve_config(nlohmann::json::parse(text), scale).dump();
    });
    m.def("_run", [](const std::string& text, const std::filesystem::path& out, int threads, double scale, bool oracle) {
        const RunOptions opt{out, threads, scale};
        py::gil_scoped_release release;
        const auto r = oracle ? oracle_check(nlohmann::json::parse(text), opt) : run_scenario(nlohmann::json::parse(text), opt);
        return std::make_tuple(r.files, r.manifest.dump(), r.passed);
    });
}
