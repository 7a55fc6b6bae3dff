#include "orbsde/linalg.hpp"

#include <limits>
#include <vector>

namespace orbsde {

namespace {

Vec solve_subset_ls(const Mat& G, const Vec& u, const std::vector<int>& passive) {
    Mat Gp(G.rows(), static_cast<Eigen::Index>(passive.size()));
    for (Eigen::Index j = 0; j < Gp.cols(); ++j) {
        Gp.col(j) = G.col(passive[static_cast<std::size_t>(j)]);
    }
    return Gp.colPivHouseholderQr().solve(u);
}

} // namespace

double nnls(const Mat& G, const Vec& u, Vec& lambda, int max_iter) {
    const Eigen::Index m = G.cols();
    lambda = Vec::Zero(m);
    if (m == 0) {
        return u.norm();
    }

    const double tol = 10.0 * std::numeric_limits<double>::epsilon()
                       * std::max(1.0, u.norm()) * std::max<double>(1.0, static_cast<double>(m));

    std::vector<bool> in_passive(static_cast<std::size_t>(m), false);
    Vec residual = u;

    for (int iter = 0; iter < max_iter; ++iter) {
        // Most negative gradient component among the active (zero) set.
        Vec w = G.transpose() * residual;
        int best = -1;
        double best_w = tol;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!in_passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
                best_w = w[j];
                best = static_cast<int>(j);
            }
        }
        if (best < 0) {
            break; // KKT satisfied
        }
        in_passive[static_cast<std::size_t>(best)] = true;

        // Inner loop: restrict to the passive set, backtrack if any
        // coefficient would go negative.
        for (;;) {
            std::vector<int> passive;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (in_passive[static_cast<std::size_t>(j)]) passive.push_back(static_cast<int>(j));
            }
            Vec z = solve_subset_ls(G, u, passive);

            bool all_pos = true;
            double alpha = 1.0;
            for (std::size_t k = 0; k < passive.size(); ++k) {
                if (z[static_cast<Eigen::Index>(k)] <= 0.0) {
                    all_pos = false;
                    double lj = lambda[passive[k]];
                    double denom = lj - z[static_cast<Eigen::Index>(k)];
                    if (denom > 0.0) {
                        alpha = std::min(alpha, lj / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if (all_pos) {
                lambda.setZero();
                for (std::size_t k = 0; k < passive.size(); ++k) {
                    lambda[passive[k]] = z[static_cast<Eigen::Index>(k)];
                }
                break;
            }
            for (std::size_t k = 0; k < passive.size(); ++k) {
                int j = passive[k];
                lambda[j] += alpha * (z[static_cast<Eigen::Index>(k)] - lambda[j]);
                if (lambda[j] <= tol) {
                    lambda[j] = 0.0;
                    in_passive[static_cast<std::size_t>(j)] = false;
                }
            }
        }
        residual = u - G * lambda;
    }
    return residual.norm();
}

double nnls_residual(const Mat& G, const Vec& u) {
    Vec lambda;
    return nnls(G, u, lambda);
}

} // namespace orbsde
