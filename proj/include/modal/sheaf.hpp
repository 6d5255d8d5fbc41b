#pragma once

// The two source-count sheaves over columns 1..P plus one observation:
//
//   JP: every column maps to the observation through S; columns are unrelated.
//   KP: additionally, column i includes into column j > i by vertex padding.
//
// The consistency radius sums one term per restriction map. The star of
// column N is {N, ..., P, observation} in KP and {N, observation} in JP.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "modal/conical.hpp"
#include "modal/exact_sum.hpp"
#include "modal/model.hpp"
#include "modal/multiset.hpp"

namespace modal {

enum class SheafType { JP, KP };

struct SheafKind {
    SheafType type = SheafType::KP;
    std::size_t max_sources = 1;
};

struct SheafAssignment {
    std::vector<SourceMultiset> columns;  // columns[i] holds i + 1 sources
    Observation observation;

    std::size_t max_sources() const { return columns.size(); }

    void validate() const {
        if (columns.empty()) throw std::invalid_argument("sheaf assignment: no columns");
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i].size() != i + 1) {
                throw std::invalid_argument("sheaf assignment: column " + std::to_string(i + 1) + " holds " +
                                            std::to_string(columns[i].size()) + " sources");
            }
            if (columns[i].space() != columns[0].space()) {
                throw std::invalid_argument("sheaf assignment: columns live in different spaces");
            }
        }
    }
};

struct RadiusBreakdown {
    std::size_t window_start = 1;
    // [i][j] for 0-based columns i < j inside the window; zero elsewhere.
    std::vector<std::vector<double>> aggregation_terms;
    std::vector<std::vector<double>> aggregation_squared_terms;
    // ||S(w_i) - z|| for columns inside the window; zero elsewhere.
    std::vector<double> data_terms;
    double total = 0.0;          // sum of listed (unsquared) terms
    double squared_total = 0.0;  // sum of squared aggregation terms and squared data terms
};

namespace detail {

inline double residual_norm(const Observation& s, const Observation& z) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s.values[i] - z.values[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline void check_sheaf_inputs(const SheafKind& kind, const SignalModel& model, const MeasurementGrid& grid,
                               const SheafAssignment& asg) {
    asg.validate();
    if (kind.max_sources < 1) throw std::invalid_argument("sheaf: max_sources must be >= 1");
    if (asg.max_sources() != kind.max_sources) {
        throw std::invalid_argument("sheaf: assignment has " + std::to_string(asg.max_sources()) +
                                    " columns, sheaf expects " + std::to_string(kind.max_sources));
    }
    if (asg.columns[0].space() != model.space()) {
        throw std::invalid_argument("sheaf: assignment space does not match the model");
    }
    const std::size_t expected = grid.size() * value_dim(model.value_kind());
    if (asg.observation.size() != expected) {
        throw std::invalid_argument("sheaf: observation length " + std::to_string(asg.observation.size()) +
                                    " does not match grid (" + std::to_string(expected) + ")");
    }
}

}  // namespace detail

// Padded multiset distance between column i (smaller) and column j.
inline double aggregation_term(const SourceMultiset& smaller, const SourceMultiset& larger, bool squared = false) {
    const auto padded = include_pad(smaller, larger.size());
    return match_points(padded.elements(), larger.elements(), larger.space(), MatchingMethod::Assignment, squared).cost;
}

inline RadiusBreakdown local_consistency_radius(const SheafKind& kind, const SignalModel& model,
                                                const MeasurementGrid& grid, const SheafAssignment& asg,
                                                std::size_t window_start) {
    detail::check_sheaf_inputs(kind, model, grid, asg);
    const std::size_t P = kind.max_sources;
    if (window_start < 1 || window_start > P) {
        throw std::invalid_argument("local_consistency_radius: window_start " + std::to_string(window_start) +
                                    " outside [1, " + std::to_string(P) + "]");
    }
    RadiusBreakdown out;
    out.window_start = window_start;
    out.aggregation_terms.assign(P, std::vector<double>(P, 0.0));
    out.aggregation_squared_terms.assign(P, std::vector<double>(P, 0.0));
    out.data_terms.assign(P, 0.0);

    ExactSum total, squared;
    const std::size_t first = window_start - 1;
    const std::size_t last = kind.type == SheafType::KP ? P - 1 : first;

    if (kind.type == SheafType::KP) {
        for (std::size_t i = first; i <= last; ++i) {
            for (std::size_t j = i + 1; j <= last; ++j) {
                const double t = aggregation_term(asg.columns[i], asg.columns[j]);
                const double t2 = aggregation_term(asg.columns[i], asg.columns[j], true);
                out.aggregation_terms[i][j] = t;
                out.aggregation_squared_terms[i][j] = t2;
                total.add(t);
                squared.add(t2);
            }
        }
    }
    for (std::size_t i = first; i <= last; ++i) {
        const double r = detail::residual_norm(evaluate_S(model, grid, asg.columns[i]), asg.observation);
        out.data_terms[i] = r;
        total.add(r);
        squared.add(r * r);
    }
    out.total = total.value();
    out.squared_total = squared.value();
    return out;
}

// Sum over every restriction map. For JP this is the sum of all column
// residuals; for KP it coincides with the window starting at column 1.
inline RadiusBreakdown global_consistency_radius(const SheafKind& kind, const SignalModel& model,
                                                 const MeasurementGrid& grid, const SheafAssignment& asg) {
    if (kind.type == SheafType::KP) return local_consistency_radius(kind, model, grid, asg, 1);

    detail::check_sheaf_inputs(kind, model, grid, asg);
    const std::size_t P = kind.max_sources;
    RadiusBreakdown out;
    out.window_start = 1;
    out.aggregation_terms.assign(P, std::vector<double>(P, 0.0));
    out.aggregation_squared_terms.assign(P, std::vector<double>(P, 0.0));
    out.data_terms.assign(P, 0.0);
    ExactSum total, squared;
    for (std::size_t i = 0; i < P; ++i) {
        const double r = detail::residual_norm(evaluate_S(model, grid, asg.columns[i]), asg.observation);
        out.data_terms[i] = r;
        total.add(r);
        squared.add(r * r);
    }
    out.total = total.value();
    out.squared_total = squared.value();
    return out;
}

// The assignment built in the vanishing-radius argument: columns at or above
// the true count hold the truth padded with vertices, lower columns hold the
// largest-magnitude truncations, and the observation is S(truth).
inline SheafAssignment lift_truth_to_assignment(const SourceMultiset& sources, std::size_t P, const SignalModel& model,
                                                const MeasurementGrid& grid) {
    if (P < 1) throw std::invalid_argument("lift_truth_to_assignment: P must be >= 1");
    if (sources.size() > P) {
        throw std::invalid_argument("lift_truth_to_assignment: " + std::to_string(sources.size()) +
                                    " sources exceed P = " + std::to_string(P));
    }
    SheafAssignment asg;
    asg.observation = evaluate_S(model, grid, sources);
    for (std::size_t i = 1; i <= P; ++i) {
        if (i >= sources.size()) {
            asg.columns.push_back(include_pad(sources, i));
        } else {
            std::vector<ConicalPoint> head(sources.begin(), sources.begin() + static_cast<std::ptrdiff_t>(i));
            asg.columns.emplace_back(sources.space(), std::move(head));
        }
    }
    return asg;
}

struct SortingCheck {
    bool holds = true;
    std::optional<std::size_t> column;  // 1-based column whose extension violates the property
    std::string reason;
};

namespace detail {

// Kuhn's augmenting-path matching on a boolean compatibility matrix.
inline bool augment(std::size_t i, const std::vector<std::vector<char>>& ok, std::vector<char>& seen,
                    std::vector<std::ptrdiff_t>& owner) {
    for (std::size_t j = 0; j < ok[i].size(); ++j) {
        if (!ok[i][j] || seen[j]) continue;
        seen[j] = 1;
        if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]), ok, seen, owner)) {
            owner[j] = static_cast<std::ptrdiff_t>(i);
            return true;
        }
    }
    return false;
}

}  // namespace detail

// Every column must be contained (up to distance tol) in the next one, and the
// appended elements must be no larger than anything already present.
inline SortingCheck verify_sorting_property(const SheafAssignment& asg, double tol = 1e-9) {
    asg.validate();
    const auto& space = asg.columns[0].space();
    for (std::size_t i = 0; i + 1 < asg.columns.size(); ++i) {
        const auto& small = asg.columns[i];
        const auto& big = asg.columns[i + 1];
        std::vector<std::vector<char>> ok(small.size(), std::vector<char>(big.size(), 0));
        for (std::size_t r = 0; r < small.size(); ++r) {
            for (std::size_t c = 0; c < big.size(); ++c) ok[r][c] = distance(small[r], big[c], space) <= tol;
        }
        std::vector<std::ptrdiff_t> owner(big.size(), -1);
        for (std::size_t r = 0; r < small.size(); ++r) {
            std::vector<char> seen(big.size(), 0);
            if (!detail::augment(r, ok, seen, owner)) {
                return {false, i + 2, "column " + std::to_string(i + 1) + " is not contained in column " + std::to_string(i + 2)};
            }
        }
        double smallest = std::numeric_limits<double>::infinity();
        for (const auto& p : small) smallest = std::min(smallest, magnitude_norm(p));
        for (std::size_t c = 0; c < big.size(); ++c) {
            if (owner[c] >= 0) continue;
            if (magnitude_norm(big[c]) > smallest + tol) {
                return {false, i + 2, "column " + std::to_string(i + 2) + " appends an element larger than column " +
                                          std::to_string(i + 1) + "'s smallest"};
            }
        }
    }
    return {};
}

}  // namespace modal
