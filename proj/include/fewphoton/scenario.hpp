// scenario.hpp - JSON scenario configs, validation diagnostics and the runs
// behind the command-line front end. Every run writes one CSV per panel plus
// a manifest holding the fully resolved configuration.

#pragma once

#include "fewphoton/green_function.hpp"
#include "fewphoton/system_model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fewphoton {

inline constexpr const char* code_version = "0.1.0";

struct Diagnostic {
    enum class Level { error, warning };
    Level level = Level::error;
    std::string path;
    std::string message;
};

std::string to_string(const Diagnostic& d);

// Never throws; an empty list means the config runs as written.
std::vector<Diagnostic> validate_config(const nlohmann::json& config);

// Config with every default filled in. Throws ConfigInvalid listing the
// error diagnostics when validation fails.
nlohmann::json resolve_config(const nlohmann::json& config, double grid_scale = 1.0);

// System described by a resolved config.
SystemSpec scenario_system(const nlohmann::json& resolved);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

// "%.12g" per value, header row, '\n' line ends.
std::string format_csv(const Table& table);
void write_csv(const Table& table, const std::filesystem::path& path);

struct RunOptions {
    std::filesystem::path out_dir = ".";
    int threads = 0; // 0: FEWPHOTON_THREADS, else hardware concurrency
    double grid_scale = 1.0;
};

struct RunResult {
    std::vector<std::filesystem::path> files;
    nlohmann::json manifest;
    bool passed = true; // oracle-check verdict
};

RunResult run_scenario(const nlohmann::json& config, const RunOptions& options);

// Compares green() with the extrapolated bath oracle on randomized queries
// against the config's system.
RunResult oracle_check(const nlohmann::json& config, const RunOptions& options);

int resolve_threads(int requested);

// Runs body(i) for i in [0, n) on `threads` workers. Exceptions are rethrown
// on the calling thread (the one from the lowest index wins).
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

std::vector<double> linspace(double lo, double hi, int points);

// Randomized Green's-function queries with 1-2 insertions whose times and
// window edges are multiples of `unit`; queries with |G| < 1e-3 are redrawn.
std::vector<GreenQuery> random_green_queries(const SystemSpec& spec, int count, std::uint64_t seed,
                                             double unit = 0.08);

// Emission probability table: one row per (first-column value, spec, tau),
// columns P<n><label> grouped by system state, then closure_deficit.
Table emission_table(const std::string& first_column, const std::vector<double>& first_values,
                     const std::function<SystemSpec(std::size_t)>& spec_at, const std::vector<double>& taus,
                     int initial, int n_max, int threads);

} // namespace fewphoton
