#pragma once

// Test-only models and independent oracles.

#include <gmpxx.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "modal/conical.hpp"
#include "modal/model.hpp"
#include "modal/multiset.hpp"

namespace modal::oracle {

// phi(x; b) = exp(-(x - b)^2 / (2 w^2)), real scalar magnitude.
class GaussianBumpModel final : public SignalModel {
public:
    explicit GaussianBumpModel(double width = 1.0, bool analytic = true, double beta = 1.0)
        : width_(width), analytic_(analytic), beta_(beta) {}

    std::string name() const override { return "bump"; }
    ConicalSpaceSpec space() const override { return {1, 1, beta_}; }
    ValueKind value_kind() const override { return ValueKind::Real; }

    void mode(std::span<const double> x, std::span<const double> b, std::span<double> out) const override {
        const double u = (x[0] - b[0]) / width_;
        out[0] = std::exp(-0.5 * u * u);
    }

    bool has_location_jacobian() const override { return analytic_; }

    void mode_location_jacobian(std::span<const double> x, std::span<const double> b,
                                std::span<double> out) const override {
        if (!analytic_) {
            SignalModel::mode_location_jacobian(x, b, out);
            return;
        }
        const double u = (x[0] - b[0]) / width_;
        out[0] = std::exp(-0.5 * u * u) * u / width_;
    }

    std::vector<std::pair<double, double>> default_location_box(const MeasurementGrid& grid) const override {
        const auto [lo, hi] = std::minmax_element(grid.points.begin(), grid.points.end());
        return {{*lo, *hi}};
    }

private:
    double width_;
    bool analytic_;
    double beta_;
};

inline MeasurementGrid line_grid(std::size_t M, double spacing, ValueKind kind, double start = 0.0) {
    MeasurementGrid g;
    g.value_kind = kind;
    for (std::size_t m = 0; m < M; ++m) g.points.push_back(start + static_cast<double>(m) * spacing);
    return g;
}

inline ConicalPoint random_point(const ConicalSpaceSpec& space, std::mt19937_64& rng, double vertex_prob = 0.0,
                                 double scale = 2.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::bernoulli_distribution vertex(vertex_prob);
    ConicalPoint p = ConicalPoint::vertex(space);
    if (vertex(rng)) return p;
    for (auto& v : p.a) v = u(rng);
    for (auto& v : p.b) v = u(rng);
    return p;
}

// Plain transcription of the bottleneck metric.
inline double bottleneck(const ConicalPoint& p, const ConicalPoint& q, double beta) {
    double np = 0, nq = 0, da = 0, db = 0;
    for (std::size_t t = 0; t < p.a.size(); ++t) {
        np += p.a[t] * p.a[t];
        nq += q.a[t] * q.a[t];
        da += (p.a[t] - q.a[t]) * (p.a[t] - q.a[t]);
    }
    for (std::size_t l = 0; l < p.b.size(); ++l) db += (p.b[l] - q.b[l]) * (p.b[l] - q.b[l]);
    return std::min(std::sqrt(np) + std::sqrt(nq), std::sqrt(da + beta * db));
}

// Nearest double to an exact rational, ties to even.
inline double round_to_double(const mpq_class& q) {
    double d = q.get_d();  // truncates toward zero
    const double lo = std::nextafter(d, -std::numeric_limits<double>::infinity());
    const double hi = std::nextafter(d, std::numeric_limits<double>::infinity());
    double best = d;
    mpq_class best_err = abs(q - mpq_class(d));
    for (double c : {lo, hi}) {
        const mpq_class err = abs(q - mpq_class(c));
        if (err < best_err) {
            best = c;
            best_err = err;
        } else if (err == best_err && c != best) {
            const auto even = [](double v) {
                int e;
                const double m = std::frexp(v, &e);
                return static_cast<long long>(std::ldexp(m, 53)) % 2 == 0;
            };
            if (even(c)) best = c;
        }
    }
    return best;
}

// Minimum over all n! pairings, summed in exact rational arithmetic. Pairs
// routed through the vertex contribute both norms as separate terms.
inline double exhaustive_distance_exact(const std::vector<ConicalPoint>& u, const std::vector<ConicalPoint>& w,
                                        double beta) {
    const std::size_t n = u.size();
    if (n == 0) return 0.0;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    bool first = true;
    mpq_class best;
    do {
        mpq_class total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = u[i];
            const auto& q = w[perm[i]];
            double np = 0, nq = 0, da = 0, db = 0;
            for (std::size_t t = 0; t < p.a.size(); ++t) {
                np += p.a[t] * p.a[t];
                nq += q.a[t] * q.a[t];
                da += (p.a[t] - q.a[t]) * (p.a[t] - q.a[t]);
            }
            for (std::size_t l = 0; l < p.b.size(); ++l) db += (p.b[l] - q.b[l]) * (p.b[l] - q.b[l]);
            const double sp = std::sqrt(np), sq = std::sqrt(nq), direct = std::sqrt(da + beta * db);
            if (sp + sq <= direct) {
                total += mpq_class(sp);
                total += mpq_class(sq);
            } else {
                total += mpq_class(direct);
            }
        }
        if (first || total < best) best = total;
        first = false;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return round_to_double(best);
}

// a_k = (1/M) sum_m z_m e^{-2 pi i k m / M}, returned for k = 0, 1, -1, 2, -2, ...
inline std::vector<std::complex<double>> inverse_dft(const std::vector<double>& z, std::size_t harmonics) {
    const std::size_t M = z.size() / 2;
    std::vector<std::complex<double>> out;
    for (std::size_t i = 0; i < harmonics; ++i) {
        const long k = static_cast<long>((i + 1) / 2) * (i % 2 == 1 ? 1 : -1);
        std::complex<long double> acc = 0;
        for (std::size_t m = 0; m < M; ++m) {
            const long double th = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(k) *
                                   static_cast<long double>(m) / static_cast<long double>(M);
            acc += std::complex<long double>(z[2 * m], z[2 * m + 1]) * std::complex<long double>(std::cos(th), std::sin(th));
        }
        acc /= static_cast<long double>(M);
        out.emplace_back(static_cast<double>(acc.real()), static_cast<double>(acc.imag()));
    }
    return out;
}

inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double x0 = x[k];
        x[k] = x0 + h;
        const double fp = f(x);
        x[k] = x0 - h;
        const double fm = f(x);
        x[k] = x0;
        g[k] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Frequencies in [-0.45, 0.45] pairwise at least min_gap apart (wrapped).
inline std::vector<double> separated_frequencies(std::size_t n, double min_gap, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.45, 0.45);
    while (true) {
        std::vector<double> f;
        for (std::size_t i = 0; i < n; ++i) f.push_back(u(rng));
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            for (std::size_t j = i + 1; j < n && ok; ++j) {
                const double d = std::fabs(f[i] - f[j]);
                ok = std::min(d, 1.0 - d) >= min_gap;
            }
        }
        if (ok) return f;
    }
}

// Complex magnitudes with modulus in [0.5, 1.5] and uniform phase.
inline std::vector<ConicalPoint> random_spectral_truth(std::size_t n, double min_gap, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mod(0.5, 1.5), phase(0.0, 2.0 * std::numbers::pi);
    std::vector<ConicalPoint> pts;
    for (double f : separated_frequencies(n, min_gap, rng)) {
        const double r = mod(rng), t = phase(rng);
        pts.push_back({{r * std::cos(t), r * std::sin(t)}, {f}});
    }
    return pts;
}

}  // namespace modal::oracle
