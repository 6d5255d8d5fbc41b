#pragma once

// Sampled-signal files, ground-truth sidecars and decomposition reports.
//
// Signals are CSV (x, re[, im], optional header) or a JSON array of
// {"x": .., "z": re | [re, im]} records. Doubles are written with 17
// significant digits so every file round-trips exactly.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "modal/conical.hpp"
#include "modal/model.hpp"
#include "modal/multiset.hpp"
#include "modal/solver.hpp"

namespace modal {

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Signal {
    MeasurementGrid grid;
    Observation z;
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
    if (!out) throw InputError("failed writing '" + path + "'");
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline Signal parse_csv_signal(const std::string& text, const std::string& path) {
    Signal sig;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::size_t columns = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split(line, ',');
        const std::string where = path + ":" + std::to_string(lineno) + ": ";
        if (first_content) {
            first_content = false;
            if (!parse_double(fields[0])) {
                if (fields.size() < 2 || fields.size() > 3) throw InputError(where + "header must name 2 or 3 columns");
                columns = fields.size();
                continue;
            }
        }
        if (fields.size() < 2 || fields.size() > 3) {
            throw InputError(where + "expected x,re[,im] but found " + std::to_string(fields.size()) + " fields");
        }
        if (columns == 0) columns = fields.size();
        if (fields.size() != columns) {
            throw InputError(where + "expected " + std::to_string(columns) + " fields, found " + std::to_string(fields.size()));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const auto v = parse_double(fields[c]);
            if (!v) throw InputError(where + "malformed number '" + fields[c] + "'");
            if (!std::isfinite(*v)) throw InputError(where + "non-finite value '" + fields[c] + "'");
            if (c == 0) {
                sig.grid.points.push_back(*v);
            } else {
                sig.z.values.push_back(*v);
            }
        }
    }
    if (sig.grid.points.empty()) throw InputError(path + ": no samples");
    sig.grid.value_kind = columns == 3 ? ValueKind::Complex : ValueKind::Real;
    return sig;
}

inline Signal parse_json_signal(const std::string& text, const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
    if (!doc.is_array()) throw InputError(path + ": expected an array of {x, z} records");
    Signal sig;
    std::optional<bool> complex;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& rec = doc[i];
        const std::string where = path + ": record " + std::to_string(i) + ": ";
        if (!rec.is_object() || !rec.contains("x") || !rec.contains("z")) throw InputError(where + "needs fields x and z");
        if (!rec["x"].is_number()) throw InputError(where + "x must be a number");
        std::vector<double> vals;
        const auto& z = rec["z"];
        if (z.is_number()) {
            vals.push_back(z.get<double>());
        } else if (z.is_array() && z.size() == 2 && z[0].is_number() && z[1].is_number()) {
            vals = {z[0].get<double>(), z[1].get<double>()};
        } else {
            throw InputError(where + "z must be a number or [re, im]");
        }
        const bool is_complex = vals.size() == 2;
        if (complex && *complex != is_complex) throw InputError(where + "mixes real and complex values");
        complex = is_complex;
        const double x = rec["x"].get<double>();
        if (!std::isfinite(x)) throw InputError(where + "non-finite x");
        for (double v : vals) {
            if (!std::isfinite(v)) throw InputError(where + "non-finite z");
        }
        sig.grid.points.push_back(x);
        sig.z.values.insert(sig.z.values.end(), vals.begin(), vals.end());
    }
    if (sig.grid.points.empty()) throw InputError(path + ": no samples");
    sig.grid.value_kind = complex.value_or(false) ? ValueKind::Complex : ValueKind::Real;
    return sig;
}

inline nlohmann::json point_to_json(const ConicalPoint& p) { return {{"a", p.a}, {"b", p.b}}; }

inline ConicalPoint point_from_json(const nlohmann::json& j) {
    return {j.at("a").get<std::vector<double>>(), j.at("b").get<std::vector<double>>()};
}

inline nlohmann::json multiset_to_json(const SourceMultiset& s) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : s) arr.push_back(point_to_json(p));
    return arr;
}

// JSON has no infinities; unavailable radii are written as null.
inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double number_from_json(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace detail

// Format chosen by extension: .json is JSON, anything else CSV.
inline Signal load_signal(const std::string& path) {
    const auto text = detail::read_file(path);
    return detail::ends_with(path, ".json") ? detail::parse_json_signal(text, path) : detail::parse_csv_signal(text, path);
}

inline std::string signal_to_csv(const MeasurementGrid& grid, const Observation& z) {
    const bool complex = grid.value_kind == ValueKind::Complex;
    std::string out = complex ? "x,re,im\n" : "x,re\n";
    const std::size_t vd = value_dim(grid.value_kind);
    for (std::size_t m = 0; m < grid.size(); ++m) {
        out += format_double(grid.points[m]);
        for (std::size_t v = 0; v < vd; ++v) out += "," + format_double(z.values[m * vd + v]);
        out += "\n";
    }
    return out;
}

inline void write_signal(const std::string& path, const MeasurementGrid& grid, const Observation& z) {
    detail::write_file(path, signal_to_csv(grid, z));
}

struct Truth {
    std::string model;
    ConicalSpaceSpec space;
    std::vector<ConicalPoint> sources;
};

inline std::string truth_to_json(const Truth& t) {
    nlohmann::json j;
    j["model"] = t.model;
    j["space"] = {{"magnitude_dim", t.space.magnitude_dim}, {"location_dim", t.space.location_dim}, {"beta", t.space.beta}};
    j["sources"] = nlohmann::json::array();
    for (const auto& p : t.sources) j["sources"].push_back(detail::point_to_json(p));
    return j.dump(2) + "\n";
}

inline void write_truth(const std::string& path, const Truth& t) { detail::write_file(path, truth_to_json(t)); }

inline Truth read_truth(const std::string& path) {
    try {
        const auto j = nlohmann::json::parse(detail::read_file(path));
        Truth t;
        t.model = j.at("model").get<std::string>();
        const auto& s = j.at("space");
        t.space = {s.at("magnitude_dim").get<std::size_t>(), s.at("location_dim").get<std::size_t>(),
                   s.at("beta").get<double>()};
        for (const auto& p : j.at("sources")) t.sources.push_back(detail::point_from_json(p));
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

// Echoed into reports so a run can be reproduced from its output.
struct RunEcho {
    std::string model;
    double beta = 1.0;
    int max_harmonic = 8;
    std::string input;
};

inline nlohmann::json report_to_json(const DecompositionReport& report, const SolverConfig& cfg, const RunEcho& echo) {
    nlohmann::json j;
    j["strategy"] = to_string(report.strategy);
    j["detected_count"] = report.detected_count;
    j["seed"] = cfg.seed;
    j["config"] = {{"model", echo.model},
                   {"beta", echo.beta},
                   {"max_harmonic", echo.max_harmonic},
                   {"input", echo.input},
                   {"max_sources", cfg.max_sources},
                   {"restarts", cfg.restarts},
                   {"max_iterations", cfg.max_iterations},
                   {"gradient_tol", cfg.gradient_tol},
                   {"step_init", cfg.step_init},
                   {"knee_ratio", cfg.knee_ratio},
                   {"vanish_tol", cfg.vanish_tol},
                   {"greedy_warn_ratio", cfg.greedy_warn_ratio},
                   {"peak_start", cfg.peak_start},
                   {"project_magnitudes", cfg.project_magnitudes}};
    j["per_count"] = nlohmann::json::array();
    for (const auto& c : report.per_count) {
        nlohmann::json e;
        e["n"] = c.n;
        e["sources"] = detail::multiset_to_json(c.sources);
        e["local_radius"] = detail::number_or_null(c.local_radius);
        e["squared_residual"] = detail::number_or_null(c.squared_residual);
        e["fit_squared_residual"] = detail::number_or_null(c.fit_squared_residual);
        e["iterations"] = c.iterations;
        e["converged"] = c.converged;
        e["error"] = c.error ? nlohmann::json(*c.error) : nlohmann::json(nullptr);
        j["per_count"].push_back(std::move(e));
    }
    j["warnings"] = report.warnings;
    if (!report.greediness.empty()) j["greediness"] = report.greediness;
    if (!report.aggregation_terms.empty()) j["aggregation_terms"] = report.aggregation_terms;
    return j;
}

inline std::string report_to_json_text(const DecompositionReport& report, const SolverConfig& cfg, const RunEcho& echo) {
    return report_to_json(report, cfg, echo).dump(2) + "\n";
}

inline std::string source_list_text(const SourceMultiset& s) {
    std::string out;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (k) out += ";";
        const auto& p = s[k];
        for (std::size_t t = 0; t < p.a.size(); ++t) out += (t ? " " : "") + format_double(p.a[t]);
        out += "@";
        for (std::size_t l = 0; l < p.b.size(); ++l) out += (l ? " " : "") + format_double(p.b[l]);
    }
    return out;
}

// Flat table alternative to the JSON report.
inline std::string report_to_csv_text(const DecompositionReport& report, const SolverConfig& cfg) {
    std::string out;
    out += "# strategy=" + to_string(report.strategy) + "\n";
    out += "# detected_count=" + std::to_string(report.detected_count) + "\n";
    out += "# seed=" + std::to_string(cfg.seed) + "\n";
    for (const auto& w : report.warnings) out += "# warning: " + w + "\n";
    out += "n,local_radius,squared_residual,fit_squared_residual,iterations,converged,error,sources\n";
    for (const auto& c : report.per_count) {
        out += std::to_string(c.n) + "," + format_double(c.local_radius) + "," + format_double(c.squared_residual) + "," +
               format_double(c.fit_squared_residual) + "," + std::to_string(c.iterations) + "," +
               (c.converged ? "1" : "0") + ",\"" + (c.error ? *c.error : "") + "\",\"" + source_list_text(c.sources) +
               "\"\n";
    }
    return out;
}

inline std::string curve_to_csv(const DecompositionReport& report) {
    std::string out = "n,local_radius,squared_residual\n";
    for (const auto& c : report.per_count) {
        out += std::to_string(c.n) + "," + format_double(c.local_radius) + "," + format_double(c.squared_residual) + "\n";
    }
    return out;
}

// What a JSON report reader recovers: enough to compare runs.
struct ReportSummary {
    std::string strategy;
    std::size_t detected_count = 0;
    std::vector<double> local_radius;
    std::vector<double> squared_residual;
    std::vector<std::vector<ConicalPoint>> sources;
};

inline ReportSummary parse_report_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ReportSummary r;
    r.strategy = j.at("strategy").get<std::string>();
    r.detected_count = j.at("detected_count").get<std::size_t>();
    for (const auto& c : j.at("per_count")) {
        r.local_radius.push_back(detail::number_from_json(c.at("local_radius")));
        r.squared_residual.push_back(detail::number_from_json(c.at("squared_residual")));
        std::vector<ConicalPoint> pts;
        for (const auto& p : c.at("sources")) pts.push_back(detail::point_from_json(p));
        r.sources.push_back(std::move(pts));
    }
    return r;
}

// Parses "re+imi@loc;..." (complex magnitude) or "a@loc" (real). Locations
// with several coordinates are separated by spaces.
inline std::vector<ConicalPoint> parse_source_list(const std::string& text, const ConicalSpaceSpec& space) {
    std::vector<ConicalPoint> out;
    for (const auto& term : detail::split(text, ';')) {
        if (term.empty()) continue;
        const auto at = term.find('@');
        if (at == std::string::npos) throw InputError("source '" + term + "' needs the form magnitude@location");
        std::string mag = detail::trim(term.substr(0, at));
        const std::string loc = detail::trim(term.substr(at + 1));

        double re = 0.0, im = 0.0;
        if (!mag.empty() && mag.back() == 'i') {
            mag.pop_back();
            std::size_t cut = std::string::npos;
            for (std::size_t k = mag.size(); k-- > 1;) {
                if ((mag[k] == '+' || mag[k] == '-') && mag[k - 1] != 'e' && mag[k - 1] != 'E') {
                    cut = k;
                    break;
                }
            }
            const std::string re_text = cut == std::string::npos ? "" : mag.substr(0, cut);
            std::string im_text = cut == std::string::npos ? mag : mag.substr(cut);
            if (im_text == "+" || im_text == "-" || im_text.empty()) im_text += "1";
            const auto r = re_text.empty() ? std::optional<double>(0.0) : detail::parse_double(re_text);
            const auto i = detail::parse_double(im_text);
            if (!r || !i) throw InputError("malformed complex magnitude in '" + term + "'");
            re = *r;
            im = *i;
        } else {
            const auto r = detail::parse_double(mag);
            if (!r) throw InputError("malformed magnitude in '" + term + "'");
            re = *r;
        }

        ConicalPoint p;
        if (space.magnitude_dim == 2) {
            p.a = {re, im};
        } else if (space.magnitude_dim == 1) {
            if (im != 0.0) throw InputError("source '" + term + "': model takes real magnitudes");
            p.a = {re};
        } else {
            throw InputError("source lists support magnitude dimension 1 or 2 only");
        }
        std::istringstream ls(loc);
        std::string tok;
        while (ls >> tok) {
            const auto v = detail::parse_double(tok);
            if (!v) throw InputError("malformed location in '" + term + "'");
            p.b.push_back(*v);
        }
        if (p.b.size() != space.location_dim) {
            throw InputError("source '" + term + "' has " + std::to_string(p.b.size()) + " location coordinates, model needs " +
                             std::to_string(space.location_dim));
        }
        for (double v : p.a) {
            if (!std::isfinite(v)) throw InputError("non-finite magnitude in '" + term + "'");
        }
        for (double v : p.b) {
            if (!std::isfinite(v)) throw InputError("non-finite location in '" + term + "'");
        }
        out.push_back(std::move(p));
    }
    if (out.empty()) throw InputError("source list is empty");
    return out;
}

struct SyntheticSpec {
    std::vector<ConicalPoint> sources;
    std::size_t samples = 16;
    double spacing = 1.0;  // x_m = m * spacing
    double sigma = 0.0;    // per real component
    std::optional<double> snr_db;  // overrides sigma when set
    std::uint64_t seed = 0;
};

inline MeasurementGrid uniform_grid(std::size_t samples, double spacing, ValueKind kind) {
    MeasurementGrid g;
    g.value_kind = kind;
    for (std::size_t m = 0; m < samples; ++m) g.points.push_back(static_cast<double>(m) * spacing);
    return g;
}

// Noise sigma per real component giving the requested SNR against clean.
inline double sigma_for_snr(const Observation& clean, std::size_t samples, ValueKind kind, double snr_db) {
    double power = 0.0;
    for (double v : clean.values) power += v * v;
    power /= static_cast<double>(samples);
    const double noise_power = power / std::pow(10.0, snr_db / 10.0);
    return std::sqrt(noise_power / static_cast<double>(value_dim(kind)));
}

inline Signal generate_synthetic(const SignalModel& model, const SyntheticSpec& spec) {
    if (spec.samples < 1) throw InputError("synthetic: samples must be >= 1");
    if (!(spec.spacing > 0.0) || !std::isfinite(spec.spacing)) throw InputError("synthetic: spacing must be positive");
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) throw InputError("synthetic: sigma must be >= 0");
    Signal sig;
    sig.grid = uniform_grid(spec.samples, spec.spacing, model.value_kind());
    const SourceMultiset truth(model.space(), spec.sources);
    sig.z = evaluate_S(model, sig.grid, truth);
    const double sigma =
        spec.snr_db ? sigma_for_snr(sig.z, spec.samples, model.value_kind(), *spec.snr_db) : spec.sigma;
    if (sigma > 0.0) {
        std::mt19937_64 rng(spec.seed);
        std::normal_distribution<double> noise(0.0, sigma);
        for (double& v : sig.z.values) v += noise(rng);
    }
    return sig;
}

}  // namespace modal
