// fewphoton - run, validate and oracle-check scenario configs.
//
//   fewphoton run <config.json> [--out DIR] [--threads N] [--grid-scale F]
//   fewphoton validate <config.json>
//   fewphoton oracle-check <config.json> [--out DIR] [--threads N]

#include "fewphoton/errors.hpp"
#include "fewphoton/scenario.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace {

nlohmann::json load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw fewphoton::Error(fewphoton::ErrorKind::config_invalid, "cannot open " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw fewphoton::Error(fewphoton::ErrorKind::config_invalid, path + ": " + e.what());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-photon propagator and scattering engine"};
    app.require_subcommand(1);

    std::string config_path;
    fewphoton::RunOptions options;
    std::string out_dir = ".";

    auto* run = app.add_subcommand("run", "run a scenario and write CSV outputs");
    auto* validate = app.add_subcommand("validate", "check a scenario config");
    auto* oracle = app.add_subcommand("oracle-check", "compare Green's functions with the discrete-bath oracle");
    for (auto* sub : {run, validate, oracle}) {
        sub->add_option("config", config_path, "scenario JSON")->required()->check(CLI::ExistingFile);
    }
    for (auto* sub : {run, oracle}) {
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--threads", options.threads, "worker threads (default: FEWPHOTON_THREADS or all cores)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--grid-scale", options.grid_scale, "multiplies every grid spacing")
            ->check(CLI::PositiveNumber);
    }

    CLI11_PARSE(app, argc, argv);
    options.out_dir = out_dir;

    try {
        const auto config = load(config_path);
        if (validate->parsed()) {
            bool ok = true;
            for (const auto& d : fewphoton::validate_config(config)) {
                std::cout << fewphoton::to_string(d) << '\n';
                ok = ok && d.level != fewphoton::Diagnostic::Level::error;
            }
            return ok ? 0 : 2;
        }
        for (const auto& d : fewphoton::validate_config(config)) std::cerr << fewphoton::to_string(d) << '\n';
        const auto result = run->parsed() ? fewphoton::run_scenario(config, options) : fewphoton::oracle_check(config, options);
        for (const auto& f : result.files) std::cout << f.string() << '\n';
        if (!result.passed) {
            std::cerr << "oracle check failed; see oracle_check.csv\n";
            return 1;
        }
    } catch (const fewphoton::Error& e) {
        std::cerr << e.what() << '\n';
        return e.kind() == fewphoton::ErrorKind::config_invalid ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
