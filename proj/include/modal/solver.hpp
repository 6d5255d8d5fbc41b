#pragma once

// Consistency-radius minimization over source counts 1..P.
//
// Fixed-count fits minimize |S(w) - z|^2 by multi-start Levenberg-Marquardt.
// solve_jp fits every count independently; solve_kp_greedy chains the fits,
// warm-starting each count from its neighbour, then minimizes the windowed
// squared KP radius over columns n..P for every n.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "modal/conical.hpp"
#include "modal/detail/levenberg_marquardt.hpp"
#include "modal/detail/objective.hpp"
#include "modal/exact_sum.hpp"
#include "modal/model.hpp"
#include "modal/multiset.hpp"
#include "modal/sheaf.hpp"

namespace modal {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct SolverConfig {
    std::size_t max_sources = 4;
    std::size_t restarts = 16;
    std::size_t max_iterations = 200;
    double gradient_tol = 1e-12;
    double step_init = 1e-3;  // initial damping of the LM iteration
    std::uint64_t seed = 0;
    // Sampling box per coordinate (A magnitude intervals, then B location
    // intervals). Empty: magnitudes in [-2, 2], locations from the model.
    std::vector<Interval> init_box;
    double knee_ratio = 10.0;
    double vanish_tol = 1e-8;
    double greedy_warn_ratio = 0.25;
    bool project_magnitudes = true;  // least-squares magnitudes for sampled locations
    bool peak_start = true;          // residual-peak start as start 0 (scalar locations)
    std::size_t threads = 1;

    void validate() const {
        if (max_sources < 1) throw std::invalid_argument("solver: max_sources must be >= 1");
        if (restarts < 1) throw std::invalid_argument("solver: restarts must be >= 1");
        if (max_iterations < 1) throw std::invalid_argument("solver: max_iterations must be >= 1");
        if (!(gradient_tol > 0.0)) throw std::invalid_argument("solver: gradient_tol must be positive");
        if (!(step_init > 0.0)) throw std::invalid_argument("solver: step_init must be positive");
        if (!(knee_ratio > 1.0)) throw std::invalid_argument("solver: knee_ratio must be > 1");
        if (!(vanish_tol >= 0.0)) throw std::invalid_argument("solver: vanish_tol must be non-negative");
        if (!(greedy_warn_ratio > 0.0)) throw std::invalid_argument("solver: greedy_warn_ratio must be positive");
        if (threads < 1) throw std::invalid_argument("solver: threads must be >= 1");
        for (const auto& iv : init_box) {
            if (!(iv.lo <= iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi)) {
                throw std::invalid_argument("solver: init_box intervals must be finite with lo <= hi");
            }
        }
    }
};

struct FixedCountResult {
    SourceMultiset sources;
    double squared_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t best_start = 0;
};

enum class Strategy { JPIndependent, KPGreedyUp, KPGreedyDown };
enum class GreedyDirection { Up, Down };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::JPIndependent: return "jp";
        case Strategy::KPGreedyUp: return "kp-up";
        case Strategy::KPGreedyDown: return "kp-down";
    }
    return "unknown";
}

struct CountResult {
    std::size_t n = 0;
    SourceMultiset sources;
    double local_radius = 0.0;      // r(n), unsquared
    double squared_residual = 0.0;  // |S(sources) - z|^2
    double fit_squared_residual = 0.0;  // data-only fit before any KP refinement
    std::size_t iterations = 0;
    bool converged = false;
    std::optional<std::string> error;
};

struct DecompositionReport {
    Strategy strategy = Strategy::JPIndependent;
    std::vector<CountResult> per_count;  // per_count[n - 1]
    std::size_t detected_count = 0;      // 0 = undetermined
    std::vector<std::string> warnings;
    // KP only: relative sub-configuration mismatch between columns n and n+1,
    // and the aggregation terms of the fully refined assignment.
    std::vector<double> greediness;
    std::vector<std::vector<double>> aggregation_terms;

    bool any_error() const {
        return std::any_of(per_count.begin(), per_count.end(), [](const CountResult& c) { return c.error.has_value(); });
    }
    std::vector<double> radii() const {
        std::vector<double> r;
        for (const auto& c : per_count) r.push_back(c.local_radius);
        return r;
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent stream per (count, start).
inline std::uint64_t task_seed(std::uint64_t seed, std::uint64_t count, std::uint64_t start) {
    return splitmix64(splitmix64(splitmix64(seed) ^ count) ^ start);
}

inline constexpr std::uint64_t kWarmElementStream = 0xFFFFFFFFull;

inline Eigen::VectorXd as_vector(const Observation& z) {
    return Eigen::Map<const Eigen::VectorXd>(z.values.data(), static_cast<Eigen::Index>(z.size()));
}

inline void check_problem(const SignalModel& model, const MeasurementGrid& grid, const Observation& z) {
    check_model_shape(model);
    check_grid(model, grid);
    const std::size_t expected = grid.size() * value_dim(model.value_kind());
    if (z.size() != expected) {
        throw std::invalid_argument("observation length " + std::to_string(z.size()) + " does not match grid (" +
                                    std::to_string(expected) + ")");
    }
    for (double v : z.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("observation contains non-finite values");
    }
}

// Real design columns of a source's magnitude coordinates at location b.
inline void magnitude_basis(const SignalModel& model, const MeasurementGrid& grid, std::span<const double> b,
                            Eigen::MatrixXd& out, Eigen::Index col) {
    const std::size_t vd = value_dim(model.value_kind());
    std::vector<double> phi(vd);
    for (std::size_t m = 0; m < grid.size(); ++m) {
        model.mode(grid.point(m), b, phi);
        const auto row = static_cast<Eigen::Index>(m * vd);
        if (model.value_kind() == ValueKind::Complex) {
            out(row, col) = phi[0];
            out(row + 1, col) = phi[1];
            out(row, col + 1) = -phi[1];
            out(row + 1, col + 1) = phi[0];
        } else {
            out(row, col) = phi[0];
        }
    }
}

// Least-squares magnitudes for the given locations. Returns false (leaving
// the points untouched) if the solution is not finite.
inline bool project_magnitudes(const SignalModel& model, const MeasurementGrid& grid, const Eigen::VectorXd& target,
                               std::vector<ConicalPoint>& pts) {
    if (pts.empty()) return true;
    const std::size_t A = model.space().magnitude_dim;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(target.size(), static_cast<Eigen::Index>(pts.size() * A));
    for (std::size_t k = 0; k < pts.size(); ++k) magnitude_basis(model, grid, pts[k].b, D, static_cast<Eigen::Index>(k * A));
    const Eigen::VectorXd sol = D.completeOrthogonalDecomposition().solve(target);
    if (!sol.allFinite()) return false;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        for (std::size_t t = 0; t < A; ++t) pts[k].a[t] = sol[static_cast<Eigen::Index>(k * A + t)];
    }
    return true;
}

struct StartBox {
    std::vector<Interval> magnitude;
    std::vector<Interval> location;
};

inline StartBox start_box(const SignalModel& model, const MeasurementGrid& grid, const SolverConfig& cfg) {
    const auto sp = model.space();
    StartBox box;
    if (!cfg.init_box.empty()) {
        if (cfg.init_box.size() != sp.point_dim()) {
            throw std::invalid_argument("solver: init_box needs " + std::to_string(sp.point_dim()) + " intervals, got " +
                                        std::to_string(cfg.init_box.size()));
        }
        box.magnitude.assign(cfg.init_box.begin(), cfg.init_box.begin() + static_cast<std::ptrdiff_t>(sp.magnitude_dim));
        box.location.assign(cfg.init_box.begin() + static_cast<std::ptrdiff_t>(sp.magnitude_dim), cfg.init_box.end());
        return box;
    }
    box.magnitude.assign(sp.magnitude_dim, Interval{-2.0, 2.0});
    for (const auto& [lo, hi] : model.default_location_box(grid)) box.location.push_back({lo, hi});
    if (box.location.size() != sp.location_dim) throw std::invalid_argument("model location box has the wrong dimension");
    return box;
}

inline ConicalPoint random_point(const StartBox& box, std::mt19937_64& rng) {
    ConicalPoint p;
    for (const auto& iv : box.magnitude) p.a.push_back(std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng));
    for (const auto& iv : box.location) p.b.push_back(std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng));
    return p;
}

inline void apply_fixed_locations(const SignalModel& model, std::size_t n, std::vector<ConicalPoint>& pts) {
    if (auto fixed = model.fixed_locations(n)) {
        for (std::size_t k = 0; k < n; ++k) pts[k].b = (*fixed)[k];
    }
}

// Greedy residual-peak start: repeatedly place a source at the candidate
// location best correlated with the current residual, then refit all
// magnitudes. Scalar locations only.
inline std::vector<ConicalPoint> peak_start(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                                           std::size_t n, const StartBox& box) {
    const auto sp = model.space();
    const Eigen::VectorXd target = as_vector(z);
    const std::size_t candidates = std::max<std::size_t>(64, 8 * grid.size());
    const double lo = box.location[0].lo;
    const double hi = box.location[0].hi;
    Eigen::MatrixXd basis(target.size(), static_cast<Eigen::Index>(sp.magnitude_dim));

    std::vector<ConicalPoint> pts;
    Eigen::VectorXd residual = target;
    for (std::size_t k = 0; k < n; ++k) {
        double best_score = -1.0;
        double best_loc = lo;
        for (std::size_t c = 0; c < candidates; ++c) {
            const double loc = lo + (hi - lo) * (static_cast<double>(c) + 0.5) / static_cast<double>(candidates);
            basis.setZero();
            magnitude_basis(model, grid, std::span<const double>(&loc, 1), basis, 0);
            double score = 0.0;
            for (Eigen::Index t = 0; t < basis.cols(); ++t) {
                const double nn = basis.col(t).squaredNorm();
                if (nn > 0.0) score += std::pow(basis.col(t).dot(residual), 2) / nn;
            }
            if (score > best_score) {
                best_score = score;
                best_loc = loc;
            }
        }
        ConicalPoint p = ConicalPoint::vertex(sp);
        p.b[0] = best_loc;
        pts.push_back(p);
        project_magnitudes(model, grid, target, pts);
        residual = target - as_vector(evaluate_S(model, grid, std::span<const ConicalPoint>(pts)));
    }
    return pts;
}

inline std::vector<std::vector<ConicalPoint>> cold_starts(const SignalModel& model, const MeasurementGrid& grid,
                                                          const Observation& z, std::size_t n, const SolverConfig& cfg,
                                                          std::size_t count) {
    const auto box = start_box(model, grid, cfg);
    const bool free_locations = !model.fixed_locations(n).has_value();
    const Eigen::VectorXd target = as_vector(z);
    std::vector<std::vector<ConicalPoint>> starts;
    for (std::size_t k = 0; k < count; ++k) {
        if (k == 0 && cfg.peak_start && free_locations && model.space().location_dim == 1) {
            starts.push_back(peak_start(model, grid, z, n, box));
            continue;
        }
        std::mt19937_64 rng(task_seed(cfg.seed, n, k));
        std::vector<ConicalPoint> pts;
        for (std::size_t i = 0; i < n; ++i) pts.push_back(random_point(box, rng));
        apply_fixed_locations(model, n, pts);
        if (cfg.project_magnitudes) project_magnitudes(model, grid, target, pts);
        starts.push_back(std::move(pts));
    }
    return starts;
}

inline SourceMultiset finalize_column(const SignalModel& model, const MeasurementGrid& grid,
                                      std::vector<ConicalPoint> pts) {
    for (auto& p : pts) model.wrap_location(p.b, grid);
    return SourceMultiset(model.space(), std::move(pts));
}

inline double squared_residual(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                               const SourceMultiset& sources) {
    const auto r = detail::residual_norm(evaluate_S(model, grid, sources), z);
    return r * r;
}

inline std::vector<char> free_mask(const SignalModel& model, const PackedLayout& layout) {
    std::vector<char> free(layout.size(), 1);
    const std::size_t A = layout.space().magnitude_dim;
    const auto range = layout.range();
    for (std::size_t n = range.first; n <= range.last; ++n) {
        if (!model.fixed_locations(n)) continue;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t off = layout.source_offset(n, k);
            for (std::size_t l = A; l < layout.source_dim(); ++l) free[off + l] = 0;
        }
    }
    return free;
}

inline LMOptions lm_options(const SolverConfig& cfg) {
    return {cfg.max_iterations, cfg.gradient_tol, cfg.step_init};
}

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// Runs one LM fit per start; the lowest final objective wins, ties going to
// the earlier start.
inline FixedCountResult solve_from_starts(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                                          std::size_t n, const SolverConfig& cfg,
                                          const std::vector<std::vector<ConicalPoint>>& starts) {
    detail::check_problem(model, grid, z);
    if (n < 1) throw std::invalid_argument("solve: source count must be >= 1");
    if (starts.empty()) throw std::invalid_argument("solve: no starting points");

    const PackedObjective objective(model, grid, z, ObjectiveKind::DataOnly, {n, n});
    const auto& layout = objective.layout();
    const auto free = detail::free_mask(model, layout);
    const auto options = detail::lm_options(cfg);

    std::vector<detail::LMResult> results(starts.size());
    std::vector<std::optional<std::string>> errors(starts.size());
    detail::parallel_for(starts.size(), cfg.threads, [&](std::size_t s) {
        try {
            if (starts[s].size() != n) throw std::invalid_argument("start has the wrong number of sources");
            auto pts = starts[s];
            for (const auto& p : pts) detail::check_point(p, model.space(), "solve start");
            detail::apply_fixed_locations(model, n, pts);
            Eigen::VectorXd x0(static_cast<Eigen::Index>(layout.size()));
            layout.store(std::span<double>(x0.data(), layout.size()), n, pts);
            results[s] = detail::levenberg_marquardt(objective, x0, free, options);
        } catch (const NumericError& e) {
            errors[s] = e.what();
        }
    });
    for (std::size_t s = 0; s < starts.size(); ++s) {
        if (errors[s]) {
            throw NumericError("count " + std::to_string(n) + ", start " + std::to_string(s) + ": " + *errors[s]);
        }
    }

    std::size_t best = 0;
    for (std::size_t s = 1; s < results.size(); ++s) {
        if (results[s].cost < results[best].cost) best = s;
    }
    const auto& win = results[best];
    auto sources = detail::finalize_column(model, grid,
                                           layout.column(std::span<const double>(win.x.data(), layout.size()), n));
    FixedCountResult out{sources, 0.0, win.iterations, win.converged, best};
    out.squared_residual = detail::squared_residual(model, grid, z, out.sources);
    if (!std::isfinite(out.squared_residual)) {
        throw NumericError("count " + std::to_string(n) + ", start " + std::to_string(best) + ": non-finite residual");
    }
    return out;
}

// Best local minimizer of |S(w) - z|^2 over n sources. With a warm start the
// budget is the warm start plus restarts - 1 cold starts.
inline FixedCountResult solve_fixed_count(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                                          std::size_t n, const SolverConfig& cfg,
                                          const std::optional<SourceMultiset>& warm_start = std::nullopt) {
    cfg.validate();
    detail::check_problem(model, grid, z);
    if (n < 1) throw std::invalid_argument("solve_fixed_count: n must be >= 1");
    std::vector<std::vector<ConicalPoint>> starts;
    if (warm_start) {
        if (warm_start->size() != n) throw std::invalid_argument("solve_fixed_count: warm start has the wrong length");
        starts.push_back(warm_start->elements());
    }
    auto cold = detail::cold_starts(model, grid, z, n, cfg, cfg.restarts - (warm_start ? 1 : 0));
    starts.insert(starts.end(), cold.begin(), cold.end());
    return solve_from_starts(model, grid, z, n, cfg, starts);
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Smallest n whose radius vanishes; otherwise the knee: the first n with
// r(n-1) >= knee_ratio * r(n) whose r(n) is within 10x of the median of the
// radii after it. Returns 0 if neither rule fires.
inline std::size_t detect_count(std::span<const double> radii, double vanish_tol, double knee_ratio) {
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (radii[i] <= vanish_tol) return i + 1;
    }
    for (std::size_t i = 1; i < radii.size(); ++i) {
        const double prev = radii[i - 1];
        const double cur = radii[i];
        if (!std::isfinite(prev) || !std::isfinite(cur)) continue;
        if (!(cur < prev) || prev < knee_ratio * cur) continue;
        std::vector<double> plateau;
        for (std::size_t k = i + 1; k < radii.size(); ++k) {
            if (std::isfinite(radii[k])) plateau.push_back(radii[k]);
        }
        if (plateau.empty() || cur <= 10.0 * median(plateau)) return i + 1;
    }
    return 0;
}

// Gradient of the squared objective with respect to the packed parameters
// of columns range.first..range.last.
inline std::vector<double> gradient_of_objective(const SignalModel& model, const MeasurementGrid& grid,
                                                 const Observation& z, std::span<const double> params,
                                                 ObjectiveKind kind, ColumnRange range) {
    const PackedObjective objective(model, grid, z, kind, range);
    if (params.size() != objective.parameter_count()) {
        throw std::invalid_argument("gradient_of_objective: expected " + std::to_string(objective.parameter_count()) +
                                    " parameters, got " + std::to_string(params.size()));
    }
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
    const Eigen::VectorXd g = objective.gradient(x);
    return {g.data(), g.data() + g.size()};
}

// Objective value matching gradient_of_objective.
inline double objective_value(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                              std::span<const double> params, ObjectiveKind kind, ColumnRange range) {
    const PackedObjective objective(model, grid, z, kind, range);
    if (params.size() != objective.parameter_count()) throw std::invalid_argument("objective_value: parameter count mismatch");
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
    return objective.value(x);
}

namespace detail {

inline void add_common_warnings(const SignalModel& model, const MeasurementGrid& grid, const SolverConfig& cfg,
                                DecompositionReport& report) {
    const auto advice = check_measurement_count(model.space(), cfg.max_sources, grid);
    if (!advice.sufficient) {
        report.warnings.push_back("measurement count: " + std::to_string(advice.real_count) +
                                  " real values do not exceed 2N(A+B) for N = " + std::to_string(cfg.max_sources) +
                                  " (need " + std::to_string(advice.required_count) + "); decomposition may be non-unique");
    }
    if (model.space().location_dim > 0 && !model.fixed_locations(1) && !model.locations_unambiguous(grid)) {
        report.warnings.push_back("grid is not an equispaced lattice: locations are reported unwrapped and may alias");
    }
}

inline std::string format_ratio(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

inline CountResult failed_count(const SignalModel& model, std::size_t n, const std::string& why) {
    CountResult c{.n = n, .sources = SourceMultiset(model.space()), .error = std::nullopt};
    c.local_radius = std::numeric_limits<double>::infinity();
    c.squared_residual = std::numeric_limits<double>::infinity();
    c.fit_squared_residual = std::numeric_limits<double>::infinity();
    c.error = why;
    return c;
}

}  // namespace detail

inline DecompositionReport solve_jp(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                                    const SolverConfig& cfg) {
    cfg.validate();
    detail::check_problem(model, grid, z);
    DecompositionReport report;
    report.strategy = Strategy::JPIndependent;

    for (std::size_t n = 1; n <= cfg.max_sources; ++n) {
        try {
            auto fit = solve_fixed_count(model, grid, z, n, cfg);
            CountResult c{.n = n, .sources = fit.sources, .error = std::nullopt};
            c.squared_residual = fit.squared_residual;
            c.fit_squared_residual = fit.squared_residual;
            c.local_radius = std::sqrt(fit.squared_residual);
            c.iterations = fit.iterations;
            c.converged = fit.converged;
            report.per_count.push_back(std::move(c));
        } catch (const NumericError& e) {
            report.per_count.push_back(detail::failed_count(model, n, e.what()));
        }
    }
    const auto radii = report.radii();
    report.detected_count = detect_count(radii, cfg.vanish_tol, cfg.knee_ratio);
    detail::add_common_warnings(model, grid, cfg, report);
    return report;
}

namespace detail {

// Previous column padded to n with the padding vertex replaced by a source at
// a random location whose magnitude fits the remaining residual.
inline SourceMultiset grow_warm_start(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                                     const SourceMultiset& prev, std::size_t n, const SolverConfig& cfg) {
    auto pts = include_pad(prev, n).elements();
    std::mt19937_64 rng(task_seed(cfg.seed, n, kWarmElementStream));
    const auto box = start_box(model, grid, cfg);
    ConicalPoint extra = random_point(box, rng);
    if (cfg.project_magnitudes) {
        const Eigen::VectorXd residual = as_vector(z) - as_vector(evaluate_S(model, grid, prev));
        std::vector<ConicalPoint> one{extra};
        apply_fixed_locations(model, n, pts);
        if (auto fixed = model.fixed_locations(n)) one[0].b = (*fixed)[n - 1];
        if (project_magnitudes(model, grid, residual, one)) extra = one[0];
    }
    pts.back() = extra;
    return SourceMultiset(model.space(), std::move(pts));
}

// Drop the smallest-magnitude element.
inline SourceMultiset shrink_warm_start(const SourceMultiset& prev) {
    auto pts = prev.elements();
    pts.pop_back();
    return SourceMultiset(prev.space(), std::move(pts));
}

}  // namespace detail

inline DecompositionReport solve_kp_greedy(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                                           const SolverConfig& cfg, GreedyDirection direction) {
    cfg.validate();
    detail::check_problem(model, grid, z);
    const std::size_t P = cfg.max_sources;
    const auto space = model.space();

    DecompositionReport report;
    report.strategy = direction == GreedyDirection::Up ? Strategy::KPGreedyUp : Strategy::KPGreedyDown;

    // Greedy chain of data-only fits.
    std::vector<std::optional<FixedCountResult>> fits(P + 1);
    std::vector<std::optional<std::string>> errors(P + 1);
    auto fit_count = [&](std::size_t n, const std::optional<SourceMultiset>& warm) {
        try {
            fits[n] = solve_fixed_count(model, grid, z, n, cfg, warm);
        } catch (const NumericError& e) {
            errors[n] = e.what();
        }
    };
    if (direction == GreedyDirection::Up) {
        for (std::size_t n = 1; n <= P; ++n) {
            std::optional<SourceMultiset> warm;
            if (n > 1 && fits[n - 1]) warm = detail::grow_warm_start(model, grid, z, fits[n - 1]->sources, n, cfg);
            fit_count(n, warm);
        }
    } else {
        for (std::size_t n = P; n >= 1; --n) {
            std::optional<SourceMultiset> warm;
            if (n < P && fits[n + 1]) warm = detail::shrink_warm_start(fits[n + 1]->sources);
            fit_count(n, warm);
        }
    }

    // Windowed refinement, largest window last so each starts from the
    // refined columns above it.
    std::vector<std::vector<ConicalPoint>> state(P + 1);
    for (std::size_t n = 1; n <= P; ++n) {
        state[n] = fits[n] ? fits[n]->sources.elements() : include_pad(SourceMultiset(space), n).elements();
    }
    report.per_count.resize(P, CountResult{.n = 0, .sources = SourceMultiset(space), .error = std::nullopt});
    const SheafKind kind{SheafType::KP, P};

    for (std::size_t w = P; w >= 1; --w) {
        std::optional<std::string> blocked;
        for (std::size_t n = w; n <= P && !blocked; ++n) {
            if (errors[n]) blocked = n == w ? *errors[n] : "depends on failed count " + std::to_string(n) + ": " + *errors[n];
        }
        if (!blocked) {
            try {
                const PackedObjective objective(model, grid, z, ObjectiveKind::KPWindowed, {w, P});
                const auto& layout = objective.layout();
                Eigen::VectorXd x0(static_cast<Eigen::Index>(layout.size()));
                const std::span<double> xs(x0.data(), layout.size());
                for (std::size_t n = w; n <= P; ++n) layout.store(xs, n, state[n]);
                const auto lm = detail::levenberg_marquardt(objective, x0, detail::free_mask(model, layout),
                                                            detail::lm_options(cfg));
                for (std::size_t n = w; n <= P; ++n) {
                    state[n] = detail::finalize_column(model, grid,
                                                       layout.column(std::span<const double>(lm.x.data(), layout.size()), n))
                                   .elements();
                }
                SheafAssignment asg;
                asg.observation = z;
                for (std::size_t n = 1; n <= P; ++n) asg.columns.emplace_back(space, state[n]);
                const auto radius = local_consistency_radius(kind, model, grid, asg, w);

                CountResult c{.n = w, .sources = asg.columns[w - 1], .error = std::nullopt};
                c.local_radius = radius.total;
                c.squared_residual = detail::squared_residual(model, grid, z, c.sources);
                c.fit_squared_residual = fits[w]->squared_residual;
                c.iterations = fits[w]->iterations + lm.iterations;
                c.converged = fits[w]->converged && lm.converged;
                report.per_count[w - 1] = std::move(c);
                if (w == 1) report.aggregation_terms = radius.aggregation_terms;
            } catch (const NumericError& e) {
                blocked = std::string("windowed refinement: ") + e.what();
            }
        }
        if (blocked) report.per_count[w - 1] = detail::failed_count(model, w, *blocked);
        if (w == 1) break;
    }

    // Greedy chaining assumes each data-only fit is a sub-configuration of the
    // next one. Measure how far the matched part of column n sits from column
    // n + 1, relative to column n's total magnitude.
    for (std::size_t n = 1; n < P; ++n) {
        if (!fits[n] || !fits[n + 1]) {
            report.greediness.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const auto& small = fits[n]->sources;
        const auto& big = fits[n + 1]->sources;
        const auto padded = include_pad(small, n + 1);
        const auto m = match_points(padded.elements(), big.elements(), space);
        ExactSum matched, mass;
        for (std::size_t k = 0; k < n; ++k) matched.add(distance(padded[k], big[m.partner[k]], space));
        for (const auto& p : small) mass.add(magnitude_norm(p));
        const double bias = mass.value() > 0.0 ? matched.value() / mass.value() : 0.0;
        report.greediness.push_back(bias);
        if (bias > cfg.greedy_warn_ratio) {
            report.warnings.push_back("greedy: the " + std::to_string(n) + "-source fit is not a sub-configuration of the " +
                                      std::to_string(n + 1) + "-source fit (relative aggregation mismatch " +
                                      detail::format_ratio(bias) + "); source magnitudes may be too similar for KP");
        }
    }

    const auto radii = report.radii();
    report.detected_count = detect_count(radii, cfg.vanish_tol, cfg.knee_ratio);
    detail::add_common_warnings(model, grid, cfg, report);
    return report;
}

inline DecompositionReport decompose(const SignalModel& model, const MeasurementGrid& grid, const Observation& z,
                                     const SolverConfig& cfg, Strategy strategy) {
    switch (strategy) {
        case Strategy::JPIndependent: return solve_jp(model, grid, z, cfg);
        case Strategy::KPGreedyUp: return solve_kp_greedy(model, grid, z, cfg, GreedyDirection::Up);
        case Strategy::KPGreedyDown: return solve_kp_greedy(model, grid, z, cfg, GreedyDirection::Down);
    }
    throw std::invalid_argument("unknown strategy");
}

}  // namespace modal
