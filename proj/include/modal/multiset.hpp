#pragma once

// Unordered source configurations (elements of I^N / S_N), stored in the
// canonical representative sorted by descending magnitude norm.

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "modal/assignment.hpp"
#include "modal/conical.hpp"
#include "modal/exact_sum.hpp"

namespace modal {

namespace detail {

// Descending magnitude, ties broken lexicographically on (a, b).
inline bool canonical_before(const ConicalPoint& p, const ConicalPoint& q) {
    const double np = magnitude_norm(p);
    const double nq = magnitude_norm(q);
    if (np != nq) return np > nq;
    if (p.a != q.a) return p.a < q.a;
    return p.b < q.b;
}

}  // namespace detail

class SourceMultiset {
public:
    explicit SourceMultiset(ConicalSpaceSpec space, std::vector<ConicalPoint> elements = {},
                            double vertex_tol = kVertexTolerance)
        : space_(space), elements_(std::move(elements)) {
        space_.validate();
        for (auto& e : elements_) {
            detail::check_point(e, space_, "SourceMultiset");
            e = canonicalize(e, vertex_tol);
        }
        std::stable_sort(elements_.begin(), elements_.end(), detail::canonical_before);
    }

    SourceMultiset(ConicalSpaceSpec space, std::initializer_list<ConicalPoint> elements)
        : SourceMultiset(space, std::vector<ConicalPoint>(elements)) {}

    const ConicalSpaceSpec& space() const { return space_; }
    const std::vector<ConicalPoint>& elements() const { return elements_; }
    std::size_t size() const { return elements_.size(); }
    bool empty() const { return elements_.empty(); }
    const ConicalPoint& operator[](std::size_t i) const { return elements_[i]; }
    auto begin() const { return elements_.begin(); }
    auto end() const { return elements_.end(); }

    friend bool operator==(const SourceMultiset&, const SourceMultiset&) = default;

private:
    ConicalSpaceSpec space_;
    std::vector<ConicalPoint> elements_;
};

enum class MatchingMethod { Assignment, Exhaustive };

// A pairing u[i] <-> w[partner[i]] and its cost.
struct Matching {
    double cost = 0.0;
    std::vector<std::size_t> partner;
};

namespace detail {

// Cost of one pairing, summed exactly. Unsquared pairs routed through the
// vertex contribute |a1| and |a2| as separate addends so that pairings which
// tie in exact arithmetic also tie in floating point.
inline double pairing_cost(const std::vector<ConicalPoint>& u, const std::vector<ConicalPoint>& w,
                           const std::vector<std::size_t>& partner, const ConicalSpaceSpec& space, bool squared) {
    ExactSum sum;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const auto r = bottleneck_route(u[i], w[partner[i]], space);
        if (squared) {
            const double d = r.value();
            sum.add(d * d);
        } else if (r.through_vertex) {
            sum.add(r.norm_p);
            sum.add(r.norm_q);
        } else {
            sum.add(r.direct);
        }
    }
    return sum.value();
}

}  // namespace detail

inline Matching match_points(const std::vector<ConicalPoint>& u, const std::vector<ConicalPoint>& w,
                             const ConicalSpaceSpec& space, MatchingMethod method = MatchingMethod::Assignment,
                             bool squared = false) {
    if (u.size() != w.size()) {
        throw std::invalid_argument("match_points: lengths differ (" + std::to_string(u.size()) + " vs " +
                                    std::to_string(w.size()) + ")");
    }
    const std::size_t n = u.size();
    Matching best;
    if (n == 0) return best;

    if (method == MatchingMethod::Exhaustive) {
        if (n > 10) throw std::invalid_argument("match_points: exhaustive matching limited to 10 elements");
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        bool first = true;
        do {
            const double c = detail::pairing_cost(u, w, perm, space, squared);
            if (first || c < best.cost) {
                best.cost = c;
                best.partner = perm;
                first = false;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        return best;
    }

    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double d = distance(u[i], w[j], space);
            cost[i * n + j] = squared ? d * d : d;
        }
    }
    best.partner = solve_assignment(cost, n);
    best.cost = detail::pairing_cost(u, w, best.partner, space, squared);
    return best;
}

inline void check_same_space(const SourceMultiset& u, const SourceMultiset& w, const char* what) {
    if (u.space() != w.space()) throw std::invalid_argument(std::string(what) + ": multisets live in different spaces");
}

inline double multiset_distance(const SourceMultiset& u, const SourceMultiset& w,
                                MatchingMethod method = MatchingMethod::Assignment) {
    check_same_space(u, w, "multiset_distance");
    return match_points(u.elements(), w.elements(), u.space(), method).cost;
}

inline SourceMultiset concat(const SourceMultiset& u, const SourceMultiset& w) {
    check_same_space(u, w, "concat");
    std::vector<ConicalPoint> all = u.elements();
    all.insert(all.end(), w.begin(), w.end());
    return SourceMultiset(u.space(), std::move(all));
}

// Inclusion into a longer configuration: pad with copies of the vertex.
inline SourceMultiset include_pad(const SourceMultiset& u, std::size_t target_len) {
    if (target_len < u.size()) {
        throw std::invalid_argument("include_pad: target length " + std::to_string(target_len) +
                                    " is shorter than the multiset (" + std::to_string(u.size()) + ")");
    }
    std::vector<ConicalPoint> all = u.elements();
    all.resize(target_len, ConicalPoint::vertex(u.space()));
    return SourceMultiset(u.space(), std::move(all));
}

}  // namespace modal
