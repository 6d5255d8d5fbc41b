#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "modal/detail/objective.hpp"

namespace modal::detail {

struct LMOptions {
    std::size_t max_iterations = 200;
    double gradient_tol = 1e-12;   // on |J^T r|_inf
    double initial_damping = 1e-3;  // relative to the largest diagonal of J^T J
};

struct LMResult {
    Eigen::VectorXd x;
    double cost = 0.0;  // |r|^2
    std::size_t iterations = 0;
    bool converged = false;
};

// Damped Gauss-Newton with Marquardt diagonal scaling. Parameters whose
// free[k] is false are held fixed.
template <class Objective>
LMResult levenberg_marquardt(const Objective& obj, Eigen::VectorXd x, const std::vector<char>& free,
                             const LMOptions& opt) {
    const auto np = x.size();
    Eigen::VectorXd r, r_new;
    Eigen::MatrixXd J;

    obj.evaluate(x, r, &J);
    double cost = r.squaredNorm();
    if (!std::isfinite(cost)) throw NumericError("non-finite objective at the starting point");

    auto masked = [&](Eigen::MatrixXd& jac) {
        for (Eigen::Index k = 0; k < np; ++k) {
            if (!free[static_cast<std::size_t>(k)]) jac.col(k).setZero();
        }
    };
    masked(J);

    LMResult out;
    double lambda = -1.0;
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it;
        const Eigen::VectorXd g = J.transpose() * r;
        if (cost == 0.0 || g.lpNorm<Eigen::Infinity>() <= opt.gradient_tol) {
            out.converged = true;
            break;
        }
        Eigen::MatrixXd H = J.transpose() * J;
        const double max_diag = std::max(H.diagonal().maxCoeff(), 1e-300);
        if (lambda < 0.0) lambda = opt.initial_damping;
        Eigen::VectorXd scale = H.diagonal().cwiseMax(1e-9 * std::max(max_diag, 1.0));
        for (Eigen::Index k = 0; k < np; ++k) {
            if (!free[static_cast<std::size_t>(k)]) {
                H.row(k).setZero();
                H.col(k).setZero();
                scale[k] = 1.0;
            }
        }

        bool accepted = false;
        bool stalled = false;
        while (true) {
            Eigen::MatrixXd A = H;
            A.diagonal() += lambda * scale;
            for (Eigen::Index k = 0; k < np; ++k) {
                if (!free[static_cast<std::size_t>(k)]) A(k, k) = 1.0;
            }
            const Eigen::VectorXd step = A.ldlt().solve(-g);
            if (step.allFinite()) {
                const Eigen::VectorXd x_new = x + step;
                obj.evaluate(x_new, r_new, nullptr);
                const double cost_new = r_new.squaredNorm();
                if (std::isfinite(cost_new) && cost_new < cost) {
                    const double drop = cost - cost_new;
                    x = x_new;
                    obj.evaluate(x, r, &J);
                    masked(J);
                    cost = r.squaredNorm();
                    lambda = std::max(lambda / 3.0, 1e-16);
                    accepted = true;
                    if (drop <= 1e-16 * cost && step.norm() <= 1e-14 * (1.0 + x.norm())) stalled = true;
                    break;
                }
                if (step.norm() <= 1e-16 * (1.0 + x.norm())) {
                    stalled = true;
                    break;
                }
            }
            lambda *= 4.0;
            if (lambda > 1e16) {
                stalled = true;
                break;
            }
        }
        out.iterations = it + 1;
        if (stalled) {
            const Eigen::VectorXd g_now = J.transpose() * r;
            out.converged = g_now.lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + cost);
            break;
        }
        if (!accepted) break;
    }
    if (!out.converged) {
        const Eigen::VectorXd g_now = J.transpose() * r;
        out.converged = cost == 0.0 || g_now.lpNorm<Eigen::Infinity>() <= opt.gradient_tol;
    }
    out.x = std::move(x);
    out.cost = cost;
    return out;
}

}  // namespace modal::detail
