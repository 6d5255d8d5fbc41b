#pragma once

// Command line front end: `decompose` and `synth` subcommands.
//
// Exit codes: 0 success, 1 configuration or input error, 2 numeric failure
// (a column errored, or no source count could be decided).

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "modal/io.hpp"
#include "modal/model.hpp"
#include "modal/solver.hpp"

namespace modal {

struct RunConfig {
    std::string model = "spectral";
    double beta = 1.0;
    int max_harmonic = 8;
    Strategy strategy = Strategy::KPGreedyUp;
    SolverConfig solver;
    std::string input;
    std::string out;
    std::string curve;
    std::string format = "json";
    bool dry_run = false;
};

namespace detail {

template <class T>
T parse_integer(const std::string& key, const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw InputError(key + ": expected an integer, got '" + text + "'");
    return v;
}

inline double parse_real(const std::string& key, const std::string& text) {
    const auto v = parse_double(text);
    if (!v || !std::isfinite(*v)) throw InputError(key + ": expected a finite number, got '" + text + "'");
    return *v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw InputError(key + ": expected true or false, got '" + text + "'");
}

inline Strategy parse_strategy(const std::string& text) {
    if (text == "jp") return Strategy::JPIndependent;
    if (text == "kp-up") return Strategy::KPGreedyUp;
    if (text == "kp-down") return Strategy::KPGreedyDown;
    throw InputError("strategy: expected jp, kp-up or kp-down, got '" + text + "'");
}

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto& s = cfg.solver;
    if (key == "model") {
        cfg.model = value;
    } else if (key == "strategy") {
        cfg.strategy = parse_strategy(value);
    } else if (key == "beta") {
        cfg.beta = parse_real(key, value);
    } else if (key == "max_harmonic") {
        cfg.max_harmonic = parse_integer<int>(key, value);
    } else if (key == "max_sources") {
        s.max_sources = parse_integer<std::size_t>(key, value);
    } else if (key == "seed") {
        s.seed = parse_integer<std::uint64_t>(key, value);
    } else if (key == "restarts") {
        s.restarts = parse_integer<std::size_t>(key, value);
    } else if (key == "max_iterations") {
        s.max_iterations = parse_integer<std::size_t>(key, value);
    } else if (key == "gradient_tol") {
        s.gradient_tol = parse_real(key, value);
    } else if (key == "step_init") {
        s.step_init = parse_real(key, value);
    } else if (key == "knee_ratio") {
        s.knee_ratio = parse_real(key, value);
    } else if (key == "vanish_tol") {
        s.vanish_tol = parse_real(key, value);
    } else if (key == "greedy_warn_ratio") {
        s.greedy_warn_ratio = parse_real(key, value);
    } else if (key == "peak_start") {
        s.peak_start = parse_bool(key, value);
    } else if (key == "project_magnitudes") {
        s.project_magnitudes = parse_bool(key, value);
    } else if (key == "input") {
        cfg.input = value;
    } else if (key == "out") {
        cfg.out = value;
    } else if (key == "curve") {
        cfg.curve = value;
    } else if (key == "format") {
        if (value != "json" && value != "csv") throw InputError("format: expected json or csv, got '" + value + "'");
        cfg.format = value;
    } else {
        throw InputError("unknown configuration key '" + key + "'");
    }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InputError(path + ":" + std::to_string(lineno) + ": expected key=value");
        try {
            apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const InputError& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

// DECOMPOSE_THREADS caps the worker count; unset means hardware concurrency.
inline std::size_t thread_budget() {
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DECOMPOSE_THREADS")) {
        const auto cap = parse_integer<std::size_t>("DECOMPOSE_THREADS", env);
        if (cap < 1) throw InputError("DECOMPOSE_THREADS must be >= 1");
        hw = std::min(hw, cap);
    }
    return hw;
}

inline int run_decompose(const RunConfig& cfg, std::ostream& out) {
    if (cfg.input.empty()) throw InputError("--input is required");
    if (cfg.out.empty()) throw InputError("--out is required");
    SolverConfig solver = cfg.solver;
    solver.threads = thread_budget();
    solver.validate();

    const auto model = ModelRegistry::instance().create(cfg.model, {cfg.beta, cfg.max_harmonic});
    model->space().validate();
    const auto sig = load_signal(cfg.input);
    check_problem(*model, sig.grid, sig.z);

    if (cfg.dry_run) {
        out << "dry run ok: " << sig.grid.size() << " samples, model=" << cfg.model
            << " strategy=" << to_string(cfg.strategy) << " max_sources=" << solver.max_sources << "\n";
        return 0;
    }

    const auto report = decompose(*model, sig.grid, sig.z, solver, cfg.strategy);
    const RunEcho echo{cfg.model, cfg.beta, cfg.max_harmonic, cfg.input};
    write_file(cfg.out, cfg.format == "json" ? report_to_json_text(report, solver, echo)
                                             : report_to_csv_text(report, solver));
    if (!cfg.curve.empty()) write_file(cfg.curve, curve_to_csv(report));

    const std::size_t shown = report.detected_count ? report.detected_count : report.per_count.size();
    const auto& col = report.per_count[shown - 1];
    out << "detected_count=" << report.detected_count
        << " final_residual=" << format_double(std::sqrt(col.squared_residual)) << "\n";
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    for (const auto& c : report.per_count) {
        if (c.error) out << "error: count " << c.n << ": " << *c.error << "\n";
    }
    return report.any_error() || report.detected_count == 0 ? 2 : 0;
}

}  // namespace detail

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Decompose sampled signals into superpositions of modes with unknown count"};
    app.require_subcommand(1);

    auto* dec = app.add_subcommand("decompose", "estimate sources for every count up to --max-sources");
    std::string config_path;
    std::map<std::string, std::string> values;
    auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
        dec->add_option(name, values[key], help);
    };
    dec->add_option("--config", config_path, "key=value configuration file (flags override it)");
    flag("--model", "model", "signal model (spectral, fourier, or a registered name)");
    flag("--strategy", "strategy", "jp, kp-up or kp-down");
    flag("--max-sources", "max_sources", "largest source count P");
    flag("--beta", "beta", "location weight in the bottleneck metric");
    flag("--seed", "seed", "random seed");
    flag("--restarts", "restarts", "starts per count");
    flag("--max-iterations", "max_iterations", "iteration cap per start");
    flag("--max-harmonic", "max_harmonic", "highest harmonic of the fourier model");
    flag("--knee-ratio", "knee_ratio", "radius drop that marks the knee");
    flag("--vanish-tol", "vanish_tol", "radius treated as zero");
    flag("--input", "input", "signal file (.csv or .json)");
    flag("--out", "out", "report path");
    flag("--curve", "curve", "radius curve CSV path");
    flag("--format", "format", "report format: json or csv");
    bool dry_run = false;
    dec->add_flag("--dry-run", dry_run, "validate configuration and input, write nothing");

    auto* syn = app.add_subcommand("synth", "write a sampled synthetic signal and its truth");
    std::string sources, syn_out, truth_path, syn_model = "spectral";
    std::size_t samples = 16;
    double sigma = 0.0, spacing = 1.0, syn_beta = 1.0, snr_db = 0.0;
    int syn_harmonic = 8;
    std::uint64_t syn_seed = 0;
    syn->add_option("--sources", sources, "\"re+imi@loc;...\"")->required();
    syn->add_option("--samples", samples, "sample count M");
    auto* spacing_opt = syn->add_option("--spacing", spacing, "sample spacing (default 1, or 1/M for fourier)");
    syn->add_option("--sigma", sigma, "noise standard deviation per real component");
    auto* snr_opt = syn->add_option("--snr-db", snr_db, "noise level as SNR in dB (overrides --sigma)");
    syn->add_option("--seed", syn_seed, "noise seed");
    syn->add_option("--out", syn_out, "signal CSV path")->required();
    syn->add_option("--truth", truth_path, "truth JSON path (default <out>.truth.json)");
    syn->add_option("--model", syn_model, "signal model");
    syn->add_option("--beta", syn_beta, "location weight");
    syn->add_option("--max-harmonic", syn_harmonic, "highest harmonic of the fourier model");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    try {
        if (dec->parsed()) {
            RunConfig cfg;
            if (!config_path.empty()) detail::apply_config_file(cfg, config_path);
            for (const auto* opt : dec->get_options()) {
                const std::string name = opt->get_single_name();
                if (opt->count() == 0 || name == "config" || name == "dry-run" || name == "help") continue;
                std::string key = name;
                std::replace(key.begin(), key.end(), '-', '_');
                detail::apply_setting(cfg, key, values.at(key));
            }
            cfg.dry_run = dry_run;
            return detail::run_decompose(cfg, out);
        }

        const auto model = ModelRegistry::instance().create(syn_model, {syn_beta, syn_harmonic});
        SyntheticSpec spec;
        spec.sources = parse_source_list(sources, model->space());
        spec.samples = samples;
        spec.spacing = spacing_opt->count() == 0 && syn_model == "fourier" ? 1.0 / static_cast<double>(samples) : spacing;
        spec.sigma = sigma;
        if (snr_opt->count() != 0) spec.snr_db = snr_db;
        spec.seed = syn_seed;
        const auto sig = generate_synthetic(*model, spec);
        write_signal(syn_out, sig.grid, sig.z);
        write_truth(truth_path.empty() ? syn_out + ".truth.json" : truth_path,
                    {syn_model, model->space(), SourceMultiset(model->space(), spec.sources).elements()});
        out << "wrote " << sig.grid.size() << " samples to " << syn_out << "\n";
        return 0;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace modal
