#pragma once

// The conical parameter space of a single source: a magnitude vector a in R^A
// and a location vector b in R^B, with every zero-magnitude point identified
// to one vertex. Metrized by the bottleneck distance
//
//   d((a1,b1),(a2,b2)) = min{ |a1| + |a2|, sqrt(|a1-a2|^2 + beta |b1-b2|^2) }.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace modal {

inline constexpr double kVertexTolerance = 1e-12;

struct ConicalSpaceSpec {
    std::size_t magnitude_dim = 1;
    std::size_t location_dim = 0;
    double beta = 1.0;

    std::size_t point_dim() const { return magnitude_dim + location_dim; }

    void validate() const {
        if (magnitude_dim < 1) throw std::invalid_argument("conical space: magnitude_dim must be >= 1");
        if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("conical space: beta must be a positive finite number");
    }

    friend bool operator==(const ConicalSpaceSpec&, const ConicalSpaceSpec&) = default;
};

struct ConicalPoint {
    std::vector<double> a;  // magnitude
    std::vector<double> b;  // location

    static ConicalPoint vertex(const ConicalSpaceSpec& space) {
        return {std::vector<double>(space.magnitude_dim, 0.0), std::vector<double>(space.location_dim, 0.0)};
    }

    bool is_vertex() const {
        return std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; });
    }

    friend bool operator==(const ConicalPoint&, const ConicalPoint&) = default;
};

namespace detail {

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double diff_norm2(const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        s += d * d;
    }
    return s;
}

inline void check_point(const ConicalPoint& p, const ConicalSpaceSpec& space, const char* what) {
    if (p.a.size() != space.magnitude_dim || p.b.size() != space.location_dim) {
        throw std::invalid_argument(std::string(what) + ": point has dimensions (" + std::to_string(p.a.size()) + ", " +
                                    std::to_string(p.b.size()) + "), space expects (" +
                                    std::to_string(space.magnitude_dim) + ", " + std::to_string(space.location_dim) + ")");
    }
}

}  // namespace detail

inline double magnitude_norm(const ConicalPoint& p) { return std::sqrt(detail::norm2(p.a)); }

// Which branch of the bottleneck minimum is active for a pair of points.
struct BottleneckRoute {
    bool through_vertex;  // the |a1| + |a2| branch
    double norm_p;        // |a1|
    double norm_q;        // |a2|
    double direct;        // sqrt(|a1-a2|^2 + beta |b1-b2|^2)

    double value() const { return through_vertex ? norm_p + norm_q : direct; }
};

inline BottleneckRoute bottleneck_route(const ConicalPoint& p, const ConicalPoint& q, const ConicalSpaceSpec& space) {
    detail::check_point(p, space, "distance");
    detail::check_point(q, space, "distance");
    BottleneckRoute r{};
    r.norm_p = magnitude_norm(p);
    r.norm_q = magnitude_norm(q);
    r.direct = std::sqrt(detail::diff_norm2(p.a, q.a) + space.beta * detail::diff_norm2(p.b, q.b));
    r.through_vertex = r.norm_p + r.norm_q <= r.direct;
    return r;
}

inline double distance(const ConicalPoint& p, const ConicalPoint& q, const ConicalSpaceSpec& space) {
    return bottleneck_route(p, q, space).value();
}

inline ConicalPoint canonicalize(const ConicalPoint& p, double tol = kVertexTolerance) {
    if (magnitude_norm(p) <= tol) {
        return {std::vector<double>(p.a.size(), 0.0), std::vector<double>(p.b.size(), 0.0)};
    }
    return p;
}

}  // namespace modal
