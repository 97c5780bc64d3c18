#include "fewphoton/scenario.hpp"

#include "fewphoton/bath_oracle.hpp"
#include "fewphoton/errors.hpp"
#include "fewphoton/propagator.hpp"
#include "fewphoton/scattering.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <thread>

namespace fewphoton {

using nlohmann::json;

namespace {

const std::set<std::string> known_kinds{"tls-emission", "tls-scattering", "lambda-emission", "lambda-subtraction",
                                        "custom"};

bool is_lambda(const std::string& kind) { return kind.rfind("lambda", 0) == 0; }

struct Checker {
    std::vector<Diagnostic> out;

    void error(std::string path, std::string message) {
        out.push_back({Diagnostic::Level::error, std::move(path), std::move(message)});
    }
    void warning(std::string path, std::string message) {
        out.push_back({Diagnostic::Level::warning, std::move(path), std::move(message)});
    }

    // Optional number field; returns the value or `fallback`.
    double number(const json& obj, const std::string& key, const std::string& path, double fallback) {
        if (!obj.contains(key)) return fallback;
        if (!obj[key].is_number()) {
            error(path + "." + key, key + " must be a number");
            return fallback;
        }
        return obj[key].get<double>();
    }

    int integer(const json& obj, const std::string& key, const std::string& path, int fallback) {
        if (!obj.contains(key)) return fallback;
        if (!obj[key].is_number_integer()) {
            error(path + "." + key, key + " must be an integer");
            return fallback;
        }
        return obj[key].get<int>();
    }

    std::pair<double, double> range(const json& obj, const std::string& path, std::pair<double, double> fallback) {
        if (!obj.contains("range")) return fallback;
        const json& r = obj["range"];
        if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
            error(path + ".range", "range must be [lo, hi]");
            return fallback;
        }
        const double lo = r[0].get<double>();
        const double hi = r[1].get<double>();
        if (hi < lo) error(path + ".range", "range is empty (hi < lo)");
        return {lo, hi};
    }
};

double total_rate(const json& system) {
    double g = 0.0;
    if (system.contains("channels") && system["channels"].is_array()) {
        for (const auto& c : system["channels"]) {
            if (c.is_object() && c.contains("rate") && c["rate"].is_number()) g += c["rate"].get<double>();
        }
    }
    return g;
}

double default_dx(const std::string& kind) { return kind == "lambda-subtraction" ? 0.05 : 0.02; }

} // namespace

std::string to_string(const Diagnostic& d) {
    return std::string(d.level == Diagnostic::Level::error ? "error" : "warning") + ": " + d.path + ": " + d.message;
}

std::vector<Diagnostic> validate_config(const json& config) {
    Checker c;
    if (!config.is_object()) {
        c.error("$", "config must be a JSON object");
        return c.out;
    }
    static const std::set<std::string> top_keys{"kind", "name", "system", "sweep", "tp_sweep", "times", "grid",
                                                "packet", "outputs", "output", "initial", "oracle"};
    for (const auto& [key, _] : config.items()) {
        if (!top_keys.contains(key)) c.warning(key, "unknown field ignored");
    }
    if (!config.contains("kind") || !config["kind"].is_string()) {
        c.error("kind", "kind required");
        return c.out;
    }
    const std::string kind = config["kind"].get<std::string>();
    if (!known_kinds.contains(kind)) {
        c.error("kind", "unknown kind '" + kind + "'");
        return c.out;
    }
    if (!config.contains("system") || !config["system"].is_object()) {
        c.error("system", "system required");
        return c.out;
    }
    const json& sys = config["system"];

    if (kind == "custom") {
        try {
            (void)build_system(sys);
        } catch (const std::exception& e) {
            c.error("system", e.what());
        }
    } else {
        if (!sys.contains("channels") || !sys["channels"].is_array() || sys["channels"].empty()) {
            c.error("system.channels[0].rate", "channels[0].rate required");
        } else {
            const json& ch = sys["channels"];
            for (std::size_t i = 0; i < ch.size(); ++i) {
                const std::string p = "system.channels[" + std::to_string(i) + "].rate";
                if (!ch[i].is_object() || !ch[i].contains("rate")) {
                    c.error(p, "channels[" + std::to_string(i) + "].rate required");
                } else if (!ch[i]["rate"].is_number()) {
                    c.error(p, "rate must be a number");
                } else if (ch[i]["rate"].get<double>() < 0.0) {
                    c.error(p, "rate must be >= 0");
                }
            }
            if (kind == "tls-scattering" && ch.size() < 2) {
                c.error("system.channels", "tls-scattering needs an input and an output channel");
            }
            if (is_lambda(kind) && ch.size() != 2) {
                c.error("system.channels", "lambda systems take exactly two channels (g1 and g2 decay)");
            }
        }
        const std::vector<std::string> fields = is_lambda(kind) ? std::vector<std::string>{"delta_e", "delta_12", "omega0", "t_pulse"}
                                                                : std::vector<std::string>{"delta_a", "omega0", "t_pulse"};
        static const std::set<std::string> extra{"channels", "initial"};
        for (const auto& [key, _] : sys.items()) {
            if (std::find(fields.begin(), fields.end(), key) == fields.end() && !extra.contains(key)) {
                c.warning("system." + key, "unknown field ignored for kind " + kind);
            }
        }
        for (const auto& f : fields) c.number(sys, f, "system", 0.0);
        if (c.number(sys, "t_pulse", "system", 0.0) < 0.0) c.error("system.t_pulse", "t_pulse must be >= 0");
    }
    if (sys.contains("initial") && !sys["initial"].is_string()) c.error("system.initial", "initial must be a state label");
    if (config.contains("initial") && !config["initial"].is_string()) c.error("initial", "initial must be a state label");

    const json grid = config.value("grid", json::object());
    if (!grid.is_object()) {
        c.error("grid", "grid must be an object");
    }
    const double dx = grid.is_object() ? c.number(grid, "dx", "grid", default_dx(kind)) : default_dx(kind);
    if (!(dx > 0.0)) c.error("grid.dx", "dx must be positive");
    if (grid.is_object()) {
        const int n_max = c.integer(grid, "n_max", "grid", 2);
        if (n_max < 0 || n_max > 3) c.error("grid.n_max", "n_max must be in [0, 3]");
        if (c.number(grid, "tail", "grid", 30.0) <= 0.0) c.error("grid.tail", "tail must be positive");
        if (c.number(grid, "dx_map", "grid", 0.05) <= 0.0) c.error("grid.dx_map", "dx_map must be positive");
    }
    const double omega0_default = kind == "custom" || kind == "lambda-subtraction" ? 0.0 : 5.0;
    const double omega0 = sys.contains("omega0") && sys["omega0"].is_number() ? sys["omega0"].get<double>() : omega0_default;
    const double rate_scale = std::max(total_rate(sys), std::abs(omega0));
    if (dx > 0.0 && dx * rate_scale > 0.1) {
        c.warning("grid.dx", "dx * max(rate, omega0) = " + std::to_string(dx * rate_scale) +
                                 " > 0.1; quadrature may fail the GridTooCoarse check");
    }

    if (config.contains("sweep")) {
        const json& s = config["sweep"];
        if (!s.is_object()) {
            c.error("sweep", "sweep must be an object");
        } else {
            const std::string var = s.value("variable", kind == "tls-scattering" ? "delta0" : "area");
            const std::set<std::string> allowed = kind == "tls-scattering" ? std::set<std::string>{"delta0"}
                                                                            : std::set<std::string>{"area", "omega0", "t_pulse"};
            if (kind == "lambda-subtraction" || kind == "custom") {
                c.error("sweep", "kind " + kind + " has no sweep");
            } else if (!allowed.contains(var)) {
                c.error("sweep.variable", "unsupported sweep variable '" + var + "'");
            }
            if (c.integer(s, "points", "sweep", 2) < 1) c.error("sweep.points", "points must be >= 1");
            c.range(s, "sweep", {0.0, 1.0});
            if (var == "area" && kind != "tls-scattering" && !(sys.value("t_pulse", 0.2) > 0.0)) {
                c.error("system.t_pulse", "area sweeps need t_pulse > 0");
            }
        }
    }
    if (config.contains("tp_sweep")) {
        const json& s = config["tp_sweep"];
        if (!s.is_object()) {
            c.error("tp_sweep", "tp_sweep must be an object");
        } else {
            if (c.integer(s, "points", "tp_sweep", 2) < 1) c.error("tp_sweep.points", "points must be >= 1");
            if (c.range(s, "tp_sweep", {0.0, 4.0}).first < 0.0) c.error("tp_sweep.range", "t_pulse must be >= 0");
        }
    }
    if (config.contains("times")) {
        const json& t = config["times"];
        if (!t.is_object()) {
            c.error("times", "times must be an object");
        } else {
            if (!(c.number(t, "tau_max", "times", 10.0) > 0.0)) c.error("times.tau_max", "tau_max must be positive");
            if (c.integer(t, "points", "times", 2) < 2) c.error("times.points", "points must be >= 2");
        }
    }
    if (config.contains("packet")) {
        const json& p = config["packet"];
        if (!p.is_object()) {
            c.error("packet", "packet must be an object");
        } else {
            const double width = c.number(p, "width", "packet", 2.0);
            if (!(width > 0.0)) {
                c.error("packet.width", "width must be positive");
            } else if (dx > 0.0 && width / dx < 4.0) {
                c.warning("packet.width", "packet width spans fewer than 4 grid cells");
            }
            c.number(p, "delta0", "packet", 0.0);
            c.number(p, "x0", "packet", 0.0);
            const int n_ch = sys.contains("channels") && sys["channels"].is_array() ? static_cast<int>(sys["channels"].size()) : 0;
            for (const char* key : {"in_channel", "out_channel"}) {
                const int ch = c.integer(p, key, "packet", 0);
                if (kind != "custom" && (ch < 0 || ch >= std::max(n_ch, 1))) {
                    c.error(std::string("packet.") + key, "channel index out of range");
                }
            }
        }
    }
    if (config.contains("outputs")) {
        static const std::set<std::string> names{"sweep", "time_series", "spacetime", "spectrum", "tp_sweep"};
        if (!config["outputs"].is_array()) {
            c.error("outputs", "outputs must be a list");
        } else {
            for (const auto& o : config["outputs"]) {
                if (!o.is_string() || !names.contains(o.get<std::string>())) c.error("outputs", "unknown output " + o.dump());
            }
        }
    }
    return c.out;
}

json resolve_config(const json& config, double grid_scale) {
    const auto diags = validate_config(config);
    std::string errors;
    for (const auto& d : diags) {
        if (d.level == Diagnostic::Level::error) errors += (errors.empty() ? "" : "; ") + d.path + ": " + d.message;
    }
    if (!errors.empty()) throw Error(ErrorKind::config_invalid, errors);
    if (!(grid_scale > 0.0)) throw Error(ErrorKind::config_invalid, "grid scale must be positive");

    json r = config;
    const std::string kind = r["kind"];
    r["name"] = r.value("name", kind);
    r["output"] = r.value("output", r["name"].get<std::string>());
    json& sys = r["system"];

    if (kind == "tls-emission" || kind == "tls-scattering") {
        sys["delta_a"] = sys.value("delta_a", 0.0);
        sys["omega0"] = sys.value("omega0", 5.0);
        sys["t_pulse"] = sys.value("t_pulse", kind == "tls-scattering" ? 4.0 : 2.0);
        sys["initial"] = sys.value("initial", "g");
    } else if (is_lambda(kind)) {
        sys["delta_e"] = sys.value("delta_e", 0.0);
        sys["delta_12"] = sys.value("delta_12", 0.0);
        sys["omega0"] = sys.value("omega0", kind == "lambda-subtraction" ? 0.0 : 5.0);
        sys["t_pulse"] = sys.value("t_pulse", kind == "lambda-subtraction" ? 0.0 : 2.0);
        sys["initial"] = sys.value("initial", "g1");
    } else {
        r["initial"] = r.value("initial", build_system(sys).labels().front());
    }

    json grid = r.value("grid", json::object());
    grid["dx"] = grid.value("dx", default_dx(kind)) * grid_scale;
    grid["dx_map"] = grid.value("dx_map", 0.05) * grid_scale;
    grid["n_max"] = grid.value("n_max", kind == "lambda-subtraction" ? 1 : 2);
    grid["tail"] = grid.value("tail", 30.0);
    grid["grid_scale"] = grid_scale;
    r["grid"] = grid;

    json times = r.value("times", json::object());
    times["tau_max"] = times.value("tau_max", kind == "lambda-subtraction" ? 20.0 : 10.0);
    times["points"] = times.value("points", kind == "lambda-subtraction" ? 41 : 101);
    r["times"] = times;

    if (r.contains("sweep")) {
        json& s = r["sweep"];
        const std::string var = s.value("variable", kind == "tls-scattering" ? "delta0" : "area");
        s["variable"] = var;
        if (!s.contains("range")) {
            s["range"] = var == "delta0" ? json::array({-8.0, 8.0}) : json::array({0.0, 4.0 * std::numbers::pi});
        }
        s["points"] = s.value("points", var == "delta0" ? 161 : 81);
    } else if (kind == "tls-scattering") {
        r["sweep"] = {{"variable", "delta0"}, {"range", {-8.0, 8.0}}, {"points", 161}};
    }
    if (kind == "tls-scattering") {
        json tp = r.value("tp_sweep", json::object());
        if (!tp.contains("range")) tp["range"] = json::array({0.0, 4.0});
        tp["points"] = tp.value("points", 81);
        r["tp_sweep"] = tp;
    }
    if (kind == "tls-scattering" || kind == "lambda-subtraction") {
        json p = r.value("packet", json::object());
        p["delta0"] = p.value("delta0", 0.0);
        p["width"] = p.value("width", 2.0);
        p["x0"] = p.value("x0", kind == "lambda-subtraction" ? -8.0 : 0.0);
        p["in_channel"] = p.value("in_channel", 0);
        p["out_channel"] = p.value("out_channel", 1);
        r["packet"] = p;
    }
    if (!r.contains("outputs")) {
        if (kind == "tls-scattering") {
            r["outputs"] = {"spectrum", "tp_sweep"};
        } else if (kind == "custom") {
            r["outputs"] = {"time_series"};
        } else if (r.contains("sweep")) {
            r["outputs"] = {"sweep"};
        } else {
            r["outputs"] = {"time_series", "spacetime"};
        }
    }
    json o = r.value("oracle", json::object());
    o["queries"] = o.value("queries", 20);
    o["seed"] = o.value("seed", 1);
    o["spacings"] = o.value("spacings", json::array({0.08, 0.04, 0.02}));
    o["tolerance"] = o.value("tolerance", 0.03);
    r["oracle"] = o;
    return r;
}

namespace {

std::vector<double> channel_rates(const json& sys) {
    std::vector<double> rates;
    for (const auto& c : sys["channels"]) rates.push_back(c["rate"].get<double>());
    return rates;
}

// System of a resolved non-custom config with the drive parameters replaced.
SystemSpec kind_system(const json& r, double omega0, double t_pulse) {
    const std::string kind = r["kind"];
    const json& sys = r["system"];
    const auto rates = channel_rates(sys);
    if (is_lambda(kind)) {
        return make_lambda(sys["delta_e"].get<double>(), sys["delta_12"].get<double>(), omega0, t_pulse, rates[0], rates[1]);
    }
    return make_tls(sys["delta_a"].get<double>(), omega0, t_pulse, rates);
}

int initial_index(const SystemSpec& spec, const json& r) {
    const std::string label = r["kind"] == "custom" ? r["initial"].get<std::string>() : r["system"]["initial"].get<std::string>();
    try {
        return spec.label_index(label);
    } catch (const Error&) {
        throw Error(ErrorKind::config_invalid, "initial state '" + label + "' is not a system label");
    }
}

double rate_sum(const SystemSpec& spec) { return spec.decay_operator().trace().real(); }

} // namespace

SystemSpec scenario_system(const json& resolved) {
    if (resolved["kind"] == "custom") return build_system(resolved["system"]);
    const json& sys = resolved["system"];
    return kind_system(resolved, sys["omega0"].get<double>(), sys["t_pulse"].get<double>());
}

// ----------------------------------------------------------------------------
// Tables

std::string format_csv(const Table& table) {
    std::string out;
    for (std::size_t i = 0; i < table.columns.size(); ++i) out += (i ? "," : "") + table.columns[i];
    out += '\n';
    char buf[64];
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.12g", row[i] == 0.0 ? 0.0 : row[i]);
            if (i) out += ',';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void write_csv(const Table& table, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::invalid_argument, "cannot write " + path.string());
    f << format_csv(table);
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FEWPHOTON_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;
    std::size_t failure_index = n;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (i < failure_index) {
                        failure_index = i;
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<double> linspace(double lo, double hi, int points) {
    if (points < 1) throw Error(ErrorKind::invalid_argument, "linspace needs at least one point");
    if (points == 1) return {lo};
    std::vector<double> v(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
    return v;
}

Table emission_table(const std::string& first_column, const std::vector<double>& first_values,
                     const std::function<SystemSpec(std::size_t)>& spec_at, const std::vector<double>& taus,
                     int initial, int n_max, int threads) {
    if (taus.size() != first_values.size()) throw Error(ErrorKind::invalid_argument, "one tau per row required");
    Table t;
    const SystemSpec probe = spec_at(0);
    t.columns.push_back(first_column);
    for (int s = 0; s < probe.dim(); ++s) {
        for (int n = 0; n <= n_max; ++n) t.columns.push_back("P" + std::to_string(n) + probe.labels()[static_cast<std::size_t>(s)]);
    }
    t.columns.push_back("closure_deficit");
    t.rows.resize(first_values.size());
    parallel_for(first_values.size(), threads, [&](std::size_t i) {
        const SystemSpec spec = spec_at(i);
        const auto p = emission_probabilities(spec, initial, taus[i], n_max);
        std::vector<double> row{first_values[i]};
        for (int s = 0; s < spec.dim(); ++s) {
            for (int n = 0; n <= n_max; ++n) row.push_back(p.at({n, s}));
        }
        row.push_back(1.0 - total_probability(p));
        t.rows[i] = std::move(row);
    });
    return t;
}

namespace {

// Single-photon |amplitude|^2 on [0, tau_max] (Schroedinger coordinates) for
// tau samples, computed through the propagator on an aligned grid.
Table spacetime_table(const SystemSpec& spec, int initial, double tau_max, int points, double dx_target, int threads) {
    const double step = tau_max / (points - 1);
    const auto sub = static_cast<int>(std::ceil(step / dx_target - 1e-9));
    const double dx = step / sub;
    const auto nodes = static_cast<std::size_t>(sub) * static_cast<std::size_t>(points - 1) + 1;
    std::vector<double> times(nodes);
    for (std::size_t k = 0; k < nodes; ++k) times[k] = static_cast<double>(k) * dx;
    const EvolutionCache cache(spec, times);

    std::vector<std::vector<std::vector<double>>> blocks(static_cast<std::size_t>(points));
    parallel_for(static_cast<std::size_t>(points), threads, [&](std::size_t i) {
        const double tau = times[i * static_cast<std::size_t>(sub)];
        const UniformGrid grid{-tau, dx, nodes};
        PropagationOptions opt;
        opt.n_max = 1;
        opt.cache = &cache;
        const auto state = apply_propagator(spec, WavepacketState::vacuum(grid, initial), 0.0, tau, opt);
        auto& rows = blocks[i];
        for (std::size_t j = 0; j < nodes; ++j) {
            for (int mu = 0; mu < spec.n_channels(); ++mu) {
                double abs2 = 0.0;
                for (int s = 0; s < spec.dim(); ++s) {
                    if (const auto* amp = state.find({s, {mu}})) abs2 += std::norm((*amp)[j]);
                }
                rows.push_back({tau, times[j], static_cast<double>(mu), abs2});
            }
        }
    });
    Table t{{"tau", "x", "channel", "abs2"}, {}};
    for (auto& b : blocks) {
        for (auto& row : b) t.rows.push_back(std::move(row));
    }
    return t;
}

struct Writer {
    std::filesystem::path dir;
    std::vector<std::filesystem::path> files;

    void operator()(const Table& t, const std::string& name) {
        const auto path = dir / name;
        write_csv(t, path);
        files.push_back(path);
    }
};

void run_emission(const json& r, int threads, Writer& write) {
    const std::string kind = r["kind"];
    const SystemSpec spec = scenario_system(r);
    const int initial = initial_index(spec, r);
    const int n_max = r["grid"]["n_max"];
    const double tail = r["grid"]["tail"].get<double>() / std::max(rate_sum(spec), 1e-12);
    const std::string prefix = kind == "custom" ? "custom" : is_lambda(kind) ? "lambda" : "emission";

    for (const auto& out : r["outputs"]) {
        const std::string o = out;
        if (o == "sweep") {
            const json& s = r["sweep"];
            const std::string var = s["variable"];
            const auto values = linspace(s["range"][0], s["range"][1], s["points"]);
            const double omega0 = r["system"]["omega0"];
            const double t_pulse = r["system"]["t_pulse"];
            std::vector<double> taus;
            std::vector<std::pair<double, double>> drives;
            for (double v : values) {
                double w = omega0, tp = t_pulse;
                if (var == "area") w = v / (2.0 * t_pulse);
                if (var == "omega0") w = v;
                if (var == "t_pulse") tp = v;
                drives.emplace_back(w, tp);
                taus.push_back(tp + tail);
            }
            const auto table = emission_table(var, values, [&](std::size_t i) {
                return kind_system(r, drives[i].first, drives[i].second);
            }, taus, initial, n_max, threads);
            write(table, prefix + "_sweep.csv");
        } else if (o == "time_series") {
            const auto taus = linspace(0.0, r["times"]["tau_max"], r["times"]["points"]);
            write(emission_table("tau", taus, [&](std::size_t) { return spec; }, taus, initial, n_max, threads),
                  prefix + "_time_series.csv");
        } else if (o == "spacetime") {
            write(spacetime_table(spec, initial, r["times"]["tau_max"], r["times"]["points"], r["grid"]["dx_map"], threads),
                  prefix + "_spacetime.csv");
        } else {
            throw Error(ErrorKind::config_invalid, "output '" + o + "' does not apply to kind " + kind);
        }
    }
}

GaussianPacket packet_of(const json& r, double delta0) {
    const json& p = r["packet"];
    return {delta0, p["width"].get<double>(), p["x0"].get<double>(), p["in_channel"].get<int>()};
}

void run_scattering(const json& r, int threads, Writer& write) {
    const json& sys = r["system"];
    const double omega0 = sys["omega0"];
    TransmissionOptions topt;
    topt.out_channel = r["packet"]["out_channel"];
    topt.dx = r["grid"]["dx"];
    const double gamma = std::max(rate_sum(kind_system(r, 0.0, 0.0)), 1e-12);

    for (const auto& out : r["outputs"]) {
        const std::string o = out;
        if (o == "spectrum") {
            const json& s = r["sweep"];
            const auto values = linspace(s["range"][0], s["range"][1], s["points"]);
            const SystemSpec driven = kind_system(r, omega0, sys["t_pulse"]);
            const SystemSpec undriven = kind_system(r, 0.0, 0.0);
            Table spectrum{{"delta0_over_gamma", "transmission_driven", "transmission_undriven"}, {}};
            Table diag{{"delta0_over_gamma", "discarded_driven", "discarded_undriven"}, {}};
            spectrum.rows.resize(values.size());
            diag.rows.resize(values.size());
            parallel_for(values.size(), threads, [&](std::size_t i) {
                const auto pk = packet_of(r, values[i]);
                const auto a = transmit_wavepacket(driven, pk, topt);
                const auto b = transmit_wavepacket(undriven, pk, topt);
                spectrum.rows[i] = {values[i] / gamma, a.transmission, b.transmission};
                diag.rows[i] = {values[i] / gamma, a.discarded, b.discarded};
            });
            write(spectrum, "scattering_spectrum.csv");
            write(diag, "scattering_spectrum_diagnostics.csv");
        } else if (o == "tp_sweep") {
            const json& s = r["tp_sweep"];
            const auto values = linspace(s["range"][0], s["range"][1], s["points"]);
            Table t{{"tp_gamma", "transmission", "discarded"}, {}};
            t.rows.resize(values.size());
            const auto pk = packet_of(r, r["packet"]["delta0"]);
            parallel_for(values.size(), threads, [&](std::size_t i) {
                const auto res = transmit_wavepacket(kind_system(r, omega0, values[i]), pk, topt);
                t.rows[i] = {values[i] * gamma, res.transmission, res.discarded};
            });
            write(t, "scattering_tp_sweep.csv");
        } else {
            throw Error(ErrorKind::config_invalid, "output '" + o + "' does not apply to kind tls-scattering");
        }
    }
}

void run_subtraction(const json& r, int threads, Writer& write) {
    const SystemSpec spec = scenario_system(r);
    const int initial = initial_index(spec, r);
    const int n_max = r["grid"]["n_max"];
    const double tau_max = r["times"]["tau_max"];
    const int points = r["times"]["points"];
    const GaussianPacket pk = packet_of(r, r["packet"]["delta0"]);
    if (n_max < 1) throw Error(ErrorKind::config_invalid, "photon subtraction needs grid.n_max >= 1");

    // Grid aligned so every tau sample and x = 0 fall on nodes.
    const double step = tau_max / (points - 1);
    const auto sub = static_cast<int>(std::ceil(step / r["grid"]["dx"].get<double>() - 1e-9));
    const double dx = step / sub;
    const double reach = 8.0 * pk.width;
    const auto below = static_cast<long>(std::ceil(std::max(tau_max, -(pk.x0 - reach)) / dx - 1e-9));
    const auto above = static_cast<long>(std::ceil(std::max(0.0, pk.x0 + reach) / dx - 1e-9));
    const UniformGrid grid{-static_cast<double>(below) * dx, dx, static_cast<std::size_t>(below + above + 1)};

    WavepacketState in(grid);
    auto& amp = in.sector({initial, {pk.channel}});
    for (std::size_t j = 0; j < grid.n; ++j) amp[j] = pk(grid.x(j));

    std::vector<double> taus(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) taus[static_cast<std::size_t>(i)] = static_cast<double>(i) * step;
    const EvolutionCache cache(spec, green_times(grid, taus));

    const int g1 = spec.label_index("g1");
    const int g2 = spec.label_index("g2");
    const int e = spec.label_index("e");
    std::vector<WavepacketState> states(static_cast<std::size_t>(points), WavepacketState(grid));
    parallel_for(static_cast<std::size_t>(points), threads, [&](std::size_t i) {
        PropagationOptions opt;
        opt.n_max = n_max;
        opt.cache = &cache;
        states[i] = apply_propagator(spec, in, 0.0, taus[i], opt);
    });

    const auto sector_norm = [&](const WavepacketState& s, int system, int channel) {
        const auto* a = s.find({system, {channel}});
        double n = 0.0;
        if (a) {
            for (std::size_t j = 0; j < grid.n; ++j) n += grid.weight(j) * std::norm((*a)[j]);
        }
        return n;
    };
    for (const auto& out : r["outputs"]) {
        const std::string o = out;
        if (o == "time_series") {
            Table t{{"tau", "Pe", "P1g1", "P2g2"}, {}};
            for (int i = 0; i < points; ++i) {
                const auto& s = states[static_cast<std::size_t>(i)];
                const auto* vac_e = s.find({e, {}});
                t.rows.push_back({taus[static_cast<std::size_t>(i)], vac_e ? std::norm((*vac_e)[0]) : 0.0,
                                  sector_norm(s, g1, 0), sector_norm(s, g2, 1)});
            }
            write(t, "subtraction_time_series.csv");
        } else if (o == "spacetime") {
            Table t{{"tau", "x", "channel", "abs2"}, {}};
            for (int i = 0; i < points; ++i) {
                const auto& s = states[static_cast<std::size_t>(i)];
                const double tau = taus[static_cast<std::size_t>(i)];
                for (std::size_t j = 0; j < grid.n; ++j) {
                    for (int mu = 0; mu < spec.n_channels(); ++mu) {
                        double abs2 = 0.0;
                        for (int sys = 0; sys < spec.dim(); ++sys) {
                            if (const auto* a = s.find({sys, {mu}})) abs2 += std::norm((*a)[j]);
                        }
                        t.rows.push_back({tau, grid.x(j) + tau, static_cast<double>(mu), abs2});
                    }
                }
            }
            write(t, "subtraction_spacetime.csv");
        } else {
            throw Error(ErrorKind::config_invalid, "output '" + o + "' does not apply to kind lambda-subtraction");
        }
    }
}

json make_manifest(const json& resolved, const RunOptions& options, int threads, const std::vector<std::filesystem::path>& files) {
    json names = json::array();
    for (const auto& f : files) names.push_back(f.filename().string());
    return {{"code_version", code_version},
            {"kind", resolved["kind"]},
            {"resolved_config", resolved},
            {"threads", threads},
            {"grid_scale", options.grid_scale},
            {"outputs", names}};
}

} // namespace

RunResult run_scenario(const json& config, const RunOptions& options) {
    const json r = resolve_config(config, options.grid_scale);
    const int threads = resolve_threads(options.threads);
    Writer write{options.out_dir / r["output"].get<std::string>(), {}};
    std::filesystem::create_directories(write.dir);
    const std::string kind = r["kind"];
    try {
        if (kind == "tls-scattering") {
            run_scattering(r, threads, write);
        } else if (kind == "lambda-subtraction") {
            run_subtraction(r, threads, write);
        } else {
            run_emission(r, threads, write);
        }
    } catch (const Error& e) {
        throw Error(e.kind(), "scenario '" + r["name"].get<std::string>() + "': " + e.what());
    }
    RunResult result;
    result.files = write.files;
    result.manifest = make_manifest(r, options, threads, write.files);
    const auto manifest_path = write.dir / "manifest.json";
    std::ofstream(manifest_path) << result.manifest.dump(2) << '\n';
    result.files.push_back(manifest_path);
    return result;
}

std::vector<GreenQuery> random_green_queries(const SystemSpec& spec, int count, std::uint64_t seed, double unit) {
    std::mt19937_64 rng(seed);
    std::vector<int> live_channels;
    for (int mu = 0; mu < spec.n_channels(); ++mu) {
        if (spec.channel(mu).norm() > 0.0) live_channels.push_back(mu);
    }
    if (live_channels.empty()) throw Error(ErrorKind::invalid_argument, "system has no coupled channel");
    std::uniform_int_distribution<int> span_steps(5, 30);
    std::uniform_int_distribution<int> n_insertions(1, 2);
    std::uniform_int_distribution<int> pick_channel(0, static_cast<int>(live_channels.size()) - 1);
    std::uniform_int_distribution<int> pick_state(0, spec.dim() - 1);
    std::bernoulli_distribution coin(0.5);

    std::vector<GreenQuery> queries;
    for (int attempt = 0; static_cast<int>(queries.size()) < count; ++attempt) {
        if (attempt > 1000 * count) throw Error(ErrorKind::invalid_argument, "could not draw non-negligible queries");
        GreenQuery q;
        const int steps = span_steps(rng);
        q.window_lo = 0.0;
        q.window_hi = steps * unit;
        std::uniform_int_distribution<int> pick_time(0, steps);
        const auto insertion = [&] {
            return Insertion{pick_time(rng) * unit, live_channels[static_cast<std::size_t>(pick_channel(rng))]};
        };
        if (n_insertions(rng) == 1) {
            (coin(rng) ? q.annihilations : q.creations).push_back(insertion());
        } else {
            q.annihilations.push_back(insertion());
            q.creations.push_back(insertion());
        }
        q.bra = pick_state(rng);
        q.ket = pick_state(rng);
        if (std::abs(green(spec, q)) >= 1e-3) queries.push_back(std::move(q));
    }
    return queries;
}

RunResult oracle_check(const json& config, const RunOptions& options) {
    const json r = resolve_config(config, options.grid_scale);
    const int threads = resolve_threads(options.threads);
    const SystemSpec spec = scenario_system(r);
    const json& o = r["oracle"];
    const auto spacings = o["spacings"].get<std::vector<double>>();
    const double tolerance = o["tolerance"];
    const auto queries = random_green_queries(spec, o["queries"], o["seed"].get<std::uint64_t>(), spacings.front());

    Table t{{"query", "insertions", "bra", "ket", "window_hi", "green_re", "green_im", "oracle_re", "oracle_im",
             "rel_error", "pass"},
            {}};
    t.rows.resize(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        const auto& q = queries[i];
        const Complex g = green(spec, q);
        const Complex b = oracle_green_extrapolated(spec, q, spacings);
        const double rel = std::abs(g - b) / std::abs(g);
        t.rows[i] = {static_cast<double>(i), static_cast<double>(q.annihilations.size() + q.creations.size()),
                     static_cast<double>(q.bra), static_cast<double>(q.ket), q.window_hi, g.real(), g.imag(),
                     b.real(), b.imag(), rel, rel <= tolerance ? 1.0 : 0.0};
    });
    Writer write{options.out_dir / r["output"].get<std::string>(), {}};
    std::filesystem::create_directories(write.dir);
    write(t, "oracle_check.csv");

    RunResult result;
    result.files = write.files;
    result.passed = std::all_of(t.rows.begin(), t.rows.end(), [](const auto& row) { return row.back() == 1.0; });
    result.manifest = make_manifest(r, options, threads, write.files);
    result.manifest["oracle_passed"] = result.passed;
    const auto manifest_path = write.dir / "oracle_manifest.json";
    std::ofstream(manifest_path) << result.manifest.dump(2) << '\n';
    result.files.push_back(manifest_path);
    return result;
}

} // namespace fewphoton
