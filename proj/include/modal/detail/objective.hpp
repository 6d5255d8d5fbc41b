#pragma once

// Squared consistency-radius objectives written as residual vectors, so that
// value = |r|^2 and gradient = 2 J^T r.
//
// Parameters are packed column by column for source counts first..last; an
// n-source column stores n consecutive (a, b) blocks.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "modal/assignment.hpp"
#include "modal/conical.hpp"
#include "modal/model.hpp"

namespace modal {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ObjectiveKind { DataOnly, KPWindowed };

struct ColumnRange {
    std::size_t first = 1;
    std::size_t last = 1;
};

class PackedLayout {
public:
    PackedLayout(const ConicalSpaceSpec& space, ColumnRange range) : space_(space), range_(range) {
        if (range.first < 1 || range.last < range.first) {
            throw std::invalid_argument("column range [" + std::to_string(range.first) + ", " +
                                        std::to_string(range.last) + "] is invalid");
        }
    }

    const ConicalSpaceSpec& space() const { return space_; }
    ColumnRange range() const { return range_; }
    std::size_t source_dim() const { return space_.point_dim(); }

    std::size_t column_offset(std::size_t n) const {
        std::size_t off = 0;
        for (std::size_t k = range_.first; k < n; ++k) off += k * source_dim();
        return off;
    }
    std::size_t source_offset(std::size_t n, std::size_t k) const { return column_offset(n) + k * source_dim(); }
    std::size_t size() const { return column_offset(range_.last + 1); }

    std::vector<ConicalPoint> column(std::span<const double> x, std::size_t n) const {
        std::vector<ConicalPoint> pts(n);
        const std::size_t A = space_.magnitude_dim;
        for (std::size_t k = 0; k < n; ++k) {
            const double* p = x.data() + source_offset(n, k);
            pts[k].a.assign(p, p + A);
            pts[k].b.assign(p + A, p + source_dim());
        }
        return pts;
    }

    void store(std::span<double> x, std::size_t n, const std::vector<ConicalPoint>& pts) const {
        if (pts.size() != n) throw std::invalid_argument("PackedLayout::store: column length mismatch");
        const std::size_t A = space_.magnitude_dim;
        for (std::size_t k = 0; k < n; ++k) {
            double* p = x.data() + source_offset(n, k);
            std::copy(pts[k].a.begin(), pts[k].a.end(), p);
            std::copy(pts[k].b.begin(), pts[k].b.end(), p + A);
        }
    }

private:
    ConicalSpaceSpec space_;
    ColumnRange range_;
};

class PackedObjective {
public:
    PackedObjective(const SignalModel& model, const MeasurementGrid& grid, const Observation& z, ObjectiveKind kind,
                    ColumnRange range)
        : model_(model), grid_(grid), z_(z), kind_(kind), layout_(model.space(), range) {
        detail::check_model_shape(model);
        detail::check_grid(model, grid);
        vd_ = value_dim(model.value_kind());
        if (z.size() != grid.size() * vd_) {
            throw std::invalid_argument("objective: observation length " + std::to_string(z.size()) +
                                        " does not match grid (" + std::to_string(grid.size() * vd_) + ")");
        }
        data_block_ = grid.size() * vd_;
        residual_count_ = (range.last - range.first + 1) * data_block_;
        if (kind == ObjectiveKind::KPWindowed) {
            for (std::size_t i = range.first; i <= range.last; ++i) {
                for (std::size_t j = i + 1; j <= range.last; ++j) residual_count_ += j * layout_.source_dim();
            }
        }
    }

    const PackedLayout& layout() const { return layout_; }
    std::size_t parameter_count() const { return layout_.size(); }
    std::size_t residual_count() const { return residual_count_; }

    void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
        const std::size_t np = parameter_count();
        r.setZero(static_cast<Eigen::Index>(residual_count_));
        if (J) J->setZero(static_cast<Eigen::Index>(residual_count_), static_cast<Eigen::Index>(np));
        const std::span<const double> xs(x.data(), np);
        const auto range = layout_.range();

        std::size_t row = 0;
        for (std::size_t n = range.first; n <= range.last; ++n) {
            add_data_block(xs, n, row, r, J);
            row += data_block_;
        }
        if (kind_ == ObjectiveKind::KPWindowed) {
            for (std::size_t i = range.first; i <= range.last; ++i) {
                for (std::size_t j = i + 1; j <= range.last; ++j) {
                    add_aggregation_block(xs, i, j, row, r, J);
                    row += j * layout_.source_dim();
                }
            }
        }
    }

    double value(const Eigen::VectorXd& x) const {
        Eigen::VectorXd r;
        evaluate(x, r, nullptr);
        return r.squaredNorm();
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        Eigen::VectorXd r;
        Eigen::MatrixXd J;
        evaluate(x, r, &J);
        return 2.0 * J.transpose() * r;
    }

private:
    void add_data_block(std::span<const double> x, std::size_t n, std::size_t row, Eigen::VectorXd& r,
                        Eigen::MatrixXd* J) const {
        const std::size_t A = layout_.space().magnitude_dim;
        const std::size_t B = layout_.space().location_dim;
        const bool complex = model_.value_kind() == ValueKind::Complex;
        std::vector<double> phi(vd_), dphi(vd_ * B);
        // Discrete locations are not differentiated; their columns stay zero.
        const bool fixed = model_.fixed_locations(n).has_value();

        for (std::size_t m = 0; m < grid_.size(); ++m) {
            for (std::size_t v = 0; v < vd_; ++v) r[static_cast<Eigen::Index>(row + m * vd_ + v)] = -z_.values[m * vd_ + v];
        }
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t off = layout_.source_offset(n, k);
            const std::span<const double> a = x.subspan(off, A);
            const std::span<const double> b = x.subspan(off + A, B);
            for (std::size_t m = 0; m < grid_.size(); ++m) {
                const auto xm = grid_.point(m);
                model_.mode(xm, b, phi);
                const auto base = static_cast<Eigen::Index>(row + m * vd_);
                double acc[2] = {0.0, 0.0};
                detail::accumulate(model_.value_kind(), a, phi, acc);
                for (std::size_t v = 0; v < vd_; ++v) r[base + static_cast<Eigen::Index>(v)] += acc[v];
                if (!J) continue;

                auto& Jm = *J;
                const auto ca = static_cast<Eigen::Index>(off);
                if (complex) {
                    Jm(base, ca) += phi[0];
                    Jm(base + 1, ca) += phi[1];
                    Jm(base, ca + 1) += -phi[1];
                    Jm(base + 1, ca + 1) += phi[0];
                } else {
                    Jm(base, ca) += phi[0];
                }
                if (B == 0 || fixed) continue;
                model_.mode_location_jacobian(xm, b, dphi);
                for (std::size_t l = 0; l < B; ++l) {
                    const auto cb = static_cast<Eigen::Index>(off + A + l);
                    if (complex) {
                        const double dr = dphi[0 * B + l];
                        const double di = dphi[1 * B + l];
                        Jm(base, cb) += a[0] * dr - a[1] * di;
                        Jm(base + 1, cb) += a[0] * di + a[1] * dr;
                    } else {
                        Jm(base, cb) += a[0] * dphi[l];
                    }
                }
            }
        }
    }

    // Column i (padded with vertices) matched against column j under the
    // squared-distance optimal pairing.
    void add_aggregation_block(std::span<const double> x, std::size_t i, std::size_t j, std::size_t row,
                               Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
        const auto& space = layout_.space();
        const std::size_t A = space.magnitude_dim;
        const std::size_t B = space.location_dim;
        const std::size_t sd = layout_.source_dim();
        const double sqrt_beta = std::sqrt(space.beta);

        auto u = layout_.column(x, i);
        u.resize(j, ConicalPoint::vertex(space));
        const auto w = layout_.column(x, j);

        std::vector<double> cost(j * j);
        for (std::size_t p = 0; p < j; ++p) {
            for (std::size_t q = 0; q < j; ++q) {
                const double d = distance(u[p], w[q], space);
                cost[p * j + q] = d * d;
            }
        }
        for (double c : cost) {
            if (!std::isfinite(c)) throw NumericError("objective: non-finite aggregation distance");
        }
        const auto partner = solve_assignment(cost, j);

        for (std::size_t p = 0; p < j; ++p) {
            const std::size_t q = partner[p];
            const auto slot = static_cast<Eigen::Index>(row + p * sd);
            const auto wa = static_cast<Eigen::Index>(layout_.source_offset(j, q));
            if (p >= i) {
                // Padding vertex: d(vertex, w)^2 = |a_w|^2.
                for (std::size_t t = 0; t < A; ++t) {
                    r[slot + static_cast<Eigen::Index>(t)] = w[q].a[t];
                    if (J) (*J)(slot + static_cast<Eigen::Index>(t), wa + static_cast<Eigen::Index>(t)) = 1.0;
                }
                continue;
            }
            const auto ua = static_cast<Eigen::Index>(layout_.source_offset(i, p));
            const auto route = bottleneck_route(u[p], w[q], space);
            if (route.through_vertex) {
                r[slot] = route.norm_p + route.norm_q;
                if (!J) continue;
                for (std::size_t t = 0; t < A; ++t) {
                    const auto tt = static_cast<Eigen::Index>(t);
                    if (route.norm_p > 0.0) (*J)(slot, ua + tt) += u[p].a[t] / route.norm_p;
                    if (route.norm_q > 0.0) (*J)(slot, wa + tt) += w[q].a[t] / route.norm_q;
                }
            } else {
                for (std::size_t t = 0; t < A; ++t) {
                    const auto tt = static_cast<Eigen::Index>(t);
                    r[slot + tt] = u[p].a[t] - w[q].a[t];
                    if (J) {
                        (*J)(slot + tt, ua + tt) = 1.0;
                        (*J)(slot + tt, wa + tt) = -1.0;
                    }
                }
                for (std::size_t l = 0; l < B; ++l) {
                    const auto ll = static_cast<Eigen::Index>(A + l);
                    r[slot + ll] = sqrt_beta * (u[p].b[l] - w[q].b[l]);
                    if (J) {
                        (*J)(slot + ll, ua + ll) = sqrt_beta;
                        (*J)(slot + ll, wa + ll) = -sqrt_beta;
                    }
                }
            }
        }
    }

    const SignalModel& model_;
    const MeasurementGrid& grid_;
    const Observation& z_;
    ObjectiveKind kind_;
    PackedLayout layout_;
    std::size_t vd_ = 1;
    std::size_t data_block_ = 0;
    std::size_t residual_count_ = 0;
};

}  // namespace modal
