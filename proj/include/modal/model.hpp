#pragma once

// Signal models s(x) = sum_n a_n phi(x; b_n) sampled on a fixed grid.
//
// Complex-valued quantities are carried as interleaved (re, im) pairs so the
// whole pipeline is real. A real model has one magnitude coordinate and one
// value per sample; a complex model has a complex magnitude (A = 2) acting on
// phi by complex multiplication.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "modal/conical.hpp"
#include "modal/multiset.hpp"

namespace modal {

enum class ValueKind { Real, Complex };

inline std::size_t value_dim(ValueKind kind) { return kind == ValueKind::Complex ? 2 : 1; }

struct MeasurementGrid {
    std::vector<double> points;  // M * input_dim, row-major
    std::size_t input_dim = 1;
    ValueKind value_kind = ValueKind::Real;

    std::size_t size() const { return input_dim == 0 ? 0 : points.size() / input_dim; }
    std::span<const double> point(std::size_t m) const { return {points.data() + m * input_dim, input_dim}; }
    std::size_t real_count() const { return size() * value_dim(value_kind); }

    void validate() const {
        if (input_dim == 0) throw std::invalid_argument("grid: input_dim must be >= 1");
        if (points.empty()) throw std::invalid_argument("grid: no samples");
        if (points.size() % input_dim != 0) throw std::invalid_argument("grid: point buffer is not a multiple of input_dim");
        for (double x : points) {
            if (!std::isfinite(x)) throw std::invalid_argument("grid: non-finite measurement input");
        }
    }
};

struct Observation {
    std::vector<double> values;  // M reals, or 2M interleaved (re, im)

    std::size_t size() const { return values.size(); }
    friend bool operator==(const Observation&, const Observation&) = default;
};

class SignalModel {
public:
    virtual ~SignalModel() = default;

    virtual std::string name() const = 0;
    virtual ConicalSpaceSpec space() const = 0;
    virtual ValueKind value_kind() const = 0;
    virtual std::size_t input_dim() const { return 1; }

    // phi(x; b), value_dim(value_kind()) reals.
    virtual void mode(std::span<const double> x, std::span<const double> b, std::span<double> out) const = 0;

    virtual bool has_location_jacobian() const { return false; }

    // d phi_v / d b_k into out[v * B + k]. Falls back to central differences.
    virtual void mode_location_jacobian(std::span<const double> x, std::span<const double> b,
                                        std::span<double> out) const {
        constexpr double h = 1e-6;
        const std::size_t vd = value_dim(value_kind());
        const std::size_t nb = b.size();
        std::vector<double> bp(b.begin(), b.end());
        std::vector<double> plus(vd), minus(vd);
        for (std::size_t k = 0; k < nb; ++k) {
            const double orig = bp[k];
            bp[k] = orig + h;
            mode(x, bp, plus);
            bp[k] = orig - h;
            mode(x, bp, minus);
            bp[k] = orig;
            for (std::size_t v = 0; v < vd; ++v) out[v * nb + k] = (plus[v] - minus[v]) / (2.0 * h);
        }
    }

    // Locations held fixed by the solver for an n-source column (discrete
    // location models); nullopt when locations are free parameters.
    virtual std::optional<std::vector<std::vector<double>>> fixed_locations(std::size_t /*n*/) const {
        return std::nullopt;
    }

    // Box the solver samples random starting locations from.
    virtual std::vector<std::pair<double, double>> default_location_box(const MeasurementGrid& /*grid*/) const {
        return std::vector<std::pair<double, double>>(space().location_dim, {-1.0, 1.0});
    }

    // False when distinct locations can produce identical samples on this
    // grid and wrap_location cannot resolve it.
    virtual bool locations_unambiguous(const MeasurementGrid& /*grid*/) const { return true; }

    // Maps a location to its canonical representative on this grid.
    virtual void wrap_location(std::span<double> /*b*/, const MeasurementGrid& /*grid*/) const {}
};

namespace detail {

inline void check_model_shape(const SignalModel& model) {
    const auto sp = model.space();
    sp.validate();
    if (model.value_kind() == ValueKind::Real && sp.magnitude_dim != 1) {
        throw std::invalid_argument("model '" + model.name() + "': real-valued models need magnitude_dim 1");
    }
    if (model.value_kind() == ValueKind::Complex && sp.magnitude_dim != 2) {
        throw std::invalid_argument("model '" + model.name() + "': complex-valued models need magnitude_dim 2");
    }
}

inline void check_grid(const SignalModel& model, const MeasurementGrid& grid) {
    grid.validate();
    if (grid.input_dim != model.input_dim()) {
        throw std::invalid_argument("grid input_dim " + std::to_string(grid.input_dim) + " does not match model '" +
                                    model.name() + "' (" + std::to_string(model.input_dim()) + ")");
    }
    if (grid.value_kind != model.value_kind()) {
        throw std::invalid_argument(std::string("grid carries ") +
                                    (grid.value_kind == ValueKind::Complex ? "complex" : "real") + " samples but model '" +
                                    model.name() + "' is " +
                                    (model.value_kind() == ValueKind::Complex ? "complex" : "real") + "-valued");
    }
}

// out += a * phi
inline void accumulate(ValueKind kind, std::span<const double> a, std::span<const double> phi, double* out) {
    if (kind == ValueKind::Complex) {
        out[0] += a[0] * phi[0] - a[1] * phi[1];
        out[1] += a[0] * phi[1] + a[1] * phi[0];
    } else {
        out[0] += a[0] * phi[0];
    }
}

// Equispaced lattice spacing h if every point is an integer multiple of one
// common step (scalar inputs only).
inline std::optional<double> lattice_spacing(const MeasurementGrid& grid) {
    if (grid.input_dim != 1 || grid.size() < 2) return std::nullopt;
    std::vector<double> xs = grid.points;
    std::sort(xs.begin(), xs.end());
    double h = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double d = xs[i] - xs[i - 1];
        if (d <= 0.0) return std::nullopt;
        if (h == 0.0 || d < h) h = d;
    }
    const double scale = std::max(std::fabs(xs.front()), std::fabs(xs.back())) / h + 1.0;
    for (double x : xs) {
        const double k = x / h;
        if (std::fabs(k - std::round(k)) > 1e-9 * scale) return std::nullopt;
    }
    return h;
}

inline double min_spacing(const MeasurementGrid& grid) {
    std::vector<double> xs = grid.points;
    std::sort(xs.begin(), xs.end());
    double h = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double d = xs[i] - xs[i - 1];
        if (d > 0.0 && (h == 0.0 || d < h)) h = d;
    }
    return h > 0.0 ? h : 1.0;
}

}  // namespace detail

// S: sources -> samples, in the order given.
inline Observation evaluate_S(const SignalModel& model, const MeasurementGrid& grid,
                              std::span<const ConicalPoint> sources) {
    detail::check_model_shape(model);
    detail::check_grid(model, grid);
    const auto sp = model.space();
    for (const auto& s : sources) detail::check_point(s, sp, "evaluate_S");

    const std::size_t vd = value_dim(model.value_kind());
    Observation z{std::vector<double>(grid.size() * vd, 0.0)};
    std::vector<double> phi(vd);
    for (const auto& s : sources) {
        if (s.is_vertex()) continue;
        for (std::size_t m = 0; m < grid.size(); ++m) {
            model.mode(grid.point(m), s.b, phi);
            detail::accumulate(model.value_kind(), s.a, phi, z.values.data() + m * vd);
        }
    }
    return z;
}

inline Observation evaluate_S(const SignalModel& model, const MeasurementGrid& grid, const SourceMultiset& sources) {
    return evaluate_S(model, grid, std::span<const ConicalPoint>(sources.elements()));
}

struct MeasurementAdvice {
    bool sufficient = true;
    std::size_t real_count = 0;      // real measurements available
    std::size_t required_count = 0;  // smallest real count exceeding 2N(A+B)
};

inline MeasurementAdvice check_measurement_count(const ConicalSpaceSpec& space, std::size_t proposed_sources,
                                                 const MeasurementGrid& grid) {
    MeasurementAdvice adv;
    adv.real_count = grid.real_count();
    const std::size_t bound = 2 * proposed_sources * space.point_dim();
    adv.required_count = bound + 1;
    adv.sufficient = adv.real_count > bound;
    return adv;
}

// e^{2 pi i omega x} for real omega. Complex magnitude, scalar frequency.
class SpectralModel final : public SignalModel {
public:
    explicit SpectralModel(double beta = 1.0) : beta_(beta) {}

    std::string name() const override { return "spectral"; }
    ConicalSpaceSpec space() const override { return {2, 1, beta_}; }
    ValueKind value_kind() const override { return ValueKind::Complex; }

    void mode(std::span<const double> x, std::span<const double> b, std::span<double> out) const override {
        const double theta = 2.0 * std::numbers::pi * b[0] * x[0];
        out[0] = std::cos(theta);
        out[1] = std::sin(theta);
    }

    bool has_location_jacobian() const override { return true; }

    void mode_location_jacobian(std::span<const double> x, std::span<const double> b,
                                std::span<double> out) const override {
        const double w = 2.0 * std::numbers::pi * x[0];
        const double theta = w * b[0];
        out[0] = -w * std::sin(theta);
        out[1] = w * std::cos(theta);
    }

    std::vector<std::pair<double, double>> default_location_box(const MeasurementGrid& grid) const override {
        const double h = detail::min_spacing(grid);
        return {{-0.5 / h, 0.5 / h}};
    }

    bool locations_unambiguous(const MeasurementGrid& grid) const override {
        return detail::lattice_spacing(grid).has_value();
    }

    // On a lattice x = k h, frequencies are only defined modulo 1/h.
    void wrap_location(std::span<double> b, const MeasurementGrid& grid) const override {
        const auto h = detail::lattice_spacing(grid);
        if (!h) return;
        const double period = 1.0 / *h;
        double w = std::fmod(b[0] + 0.5 * period, period);
        if (w < 0.0) w += period;
        b[0] = w - 0.5 * period;
    }

private:
    double beta_;
};

// Fourier series modes e^{2 pi i n x} for integer n in [-K, K].
class FourierModel final : public SignalModel {
public:
    explicit FourierModel(int max_harmonic, double beta = 1.0) : max_harmonic_(max_harmonic), beta_(beta) {
        if (max_harmonic < 0) throw std::invalid_argument("fourier model: max_harmonic must be >= 0");
    }

    std::string name() const override { return "fourier"; }
    ConicalSpaceSpec space() const override { return {2, 1, beta_}; }
    ValueKind value_kind() const override { return ValueKind::Complex; }
    int max_harmonic() const { return max_harmonic_; }

    void mode(std::span<const double> x, std::span<const double> b, std::span<double> out) const override {
        const double n = b[0];
        if (n != std::round(n) || std::fabs(n) > max_harmonic_) {
            throw std::invalid_argument("fourier model: location " + std::to_string(n) +
                                        " is not an integer harmonic within +/-" + std::to_string(max_harmonic_));
        }
        const double theta = 2.0 * std::numbers::pi * n * x[0];
        out[0] = std::cos(theta);
        out[1] = std::sin(theta);
    }

    // Harmonics in order 0, 1, -1, 2, -2, ...
    std::optional<std::vector<std::vector<double>>> fixed_locations(std::size_t n) const override {
        const std::size_t available = 2 * static_cast<std::size_t>(max_harmonic_) + 1;
        if (n > available) {
            throw std::invalid_argument("fourier model: " + std::to_string(n) + " sources requested but only " +
                                        std::to_string(available) + " harmonics exist");
        }
        std::vector<std::vector<double>> locs;
        for (std::size_t i = 0; i < n; ++i) {
            const double k = static_cast<double>((i + 1) / 2);
            locs.push_back({i % 2 == 1 ? k : -k});
        }
        return locs;
    }

    std::vector<std::pair<double, double>> default_location_box(const MeasurementGrid&) const override {
        return {{-static_cast<double>(max_harmonic_), static_cast<double>(max_harmonic_)}};
    }

private:
    int max_harmonic_;
    double beta_;
};

inline std::unique_ptr<SignalModel> fourier_model(int max_harmonic, double beta = 1.0) {
    return std::make_unique<FourierModel>(max_harmonic, beta);
}

inline std::unique_ptr<SignalModel> spectral_model(double beta = 1.0) { return std::make_unique<SpectralModel>(beta); }

struct ModelOptions {
    double beta = 1.0;
    int max_harmonic = 8;
};

// Name -> factory table used by the command line front end. Custom models
// register here.
class ModelRegistry {
public:
    using Factory = std::function<std::unique_ptr<SignalModel>(const ModelOptions&)>;

    static ModelRegistry& instance() {
        static ModelRegistry registry;
        return registry;
    }

    void add(const std::string& name, Factory factory) { factories_[name] = std::move(factory); }

    bool contains(const std::string& name) const { return factories_.count(name) != 0; }

    std::unique_ptr<SignalModel> create(const std::string& name, const ModelOptions& opts) const {
        auto it = factories_.find(name);
        if (it == factories_.end()) throw std::invalid_argument("unknown model '" + name + "'");
        return it->second(opts);
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : factories_) out.push_back(k);
        return out;
    }

private:
    ModelRegistry() {
        add("spectral", [](const ModelOptions& o) { return spectral_model(o.beta); });
        add("fourier", [](const ModelOptions& o) { return fourier_model(o.max_harmonic, o.beta); });
    }

    std::map<std::string, Factory> factories_;
};

}  // namespace modal
