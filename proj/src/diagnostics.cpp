#include "orbsde/diagnostics.hpp"

#include "orbsde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace orbsde::diagnostics {

namespace {

double weighted_mean(const Vec& values, const Vec& weights) {
    return values.dot(weights);
}

double weighted_quantile(const Vec& values, const Vec& weights, double q) {
    std::vector<int> order(static_cast<std::size_t>(values.size()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return values[a] < values[b]; });
    double cum = 0.0;
    for (int idx : order) {
        cum += weights[idx];
        if (cum >= q) return values[idx];
    }
    return values[order.back()];
}

std::vector<int> coarse_indices(int steps, int wanted) {
    std::vector<int> out;
    const int stride = std::max(1, steps / std::max(1, wanted));
    for (int i = 0; i < steps; i += stride) out.push_back(i);
    return out;
}

Mat z_as_matrix(const Mat& zflat, int row, int d, int k) {
    Mat z(d, k);
    for (int j = 0; j < d; ++j) {
        for (int c = 0; c < k; ++c) z(j, c) = zflat(row, j * k + c);
    }
    return z;
}

// mean |f(t_i, X_i, Y_i, Z_i)|^2 per slice.
Vec driver_mean_sq(const solver::DiscreteSolution& sol, const solver::Scenario& scenario,
                   solver::CondExpEngine& engine) {
    Vec out(sol.steps);
    for (int i = 0; i < sol.steps; ++i) {
        const Mat& x = engine.states(i);
        const Vec w = engine.weights(i);
        const double t = sol.dt * i;
        double acc = 0.0;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const Vec f = scenario.driver.f(t, x.row(r).transpose(),
                                            sol.Y[static_cast<std::size_t>(i)].row(r).transpose(),
                                            z_as_matrix(sol.Z[static_cast<std::size_t>(i)],
                                                        static_cast<int>(r), sol.ydim,
                                                        sol.noise_dim));
            acc += w[r] * f.squaredNorm();
        }
        out[i] = acc;
    }
    return out;
}

} // namespace

RatioResult apriori_check(const solver::DiscreteSolution& sol, const solver::Scenario& scenario,
                          solver::CondExpEngine& engine) {
    double sup_y = 0.0;
    double z_energy = 0.0;
    for (int i = 0; i <= sol.steps; ++i) {
        const Vec w = engine.weights(i);
        sup_y = std::max(sup_y, solver::mean_squared_norm(sol.Y[static_cast<std::size_t>(i)], w));
        if (i < sol.steps) {
            z_energy += solver::mean_squared_norm(sol.Z[static_cast<std::size_t>(i)], w) * sol.dt;
        }
    }
    const double numerator = sup_y + z_energy;

    double xi_sq = solver::mean_squared_norm(sol.Y[static_cast<std::size_t>(sol.steps)],
                                             engine.weights(sol.steps));
    double alpha_energy = 0.0;
    for (int i = 0; i < sol.steps; ++i) {
        const Mat& x = engine.states(i);
        const Vec w = engine.weights(i);
        const double t = sol.dt * i;
        double acc = 0.0;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const double a = scenario.driver.alpha_hat
                                 ? scenario.driver.alpha_hat(t, x.row(r).transpose())
                                 : scenario.driver.lip_L
                                       * (1.0 + std::pow(x.row(r).norm(), scenario.driver.growth_p));
            acc += w[r] * a * a;
        }
        alpha_energy += acc * sol.dt;
    }
    const double denominator = xi_sq + alpha_energy;
    if (denominator <= 0.0) {
        return {numerator, true};
    }
    return {numerator / denominator, false};
}

RatioResult structural_check(const solver::DiscreteSolution& sol, const solver::Scenario& scenario,
                             solver::CondExpEngine& engine) {
    Vec phi_sq(sol.steps), f_sq = driver_mean_sq(sol, scenario, engine);
    for (int i = 0; i < sol.steps; ++i) {
        phi_sq[i] = solver::mean_squared_norm(sol.Phi[static_cast<std::size_t>(i)], engine.weights(i));
    }
    // Suffix energies sum s >= t.
    Vec phi_tail = Vec::Zero(sol.steps + 1), f_tail = Vec::Zero(sol.steps + 1);
    for (int i = sol.steps - 1; i >= 0; --i) {
        phi_tail[i] = phi_tail[i + 1] + phi_sq[i] * sol.dt;
        f_tail[i] = f_tail[i + 1] + f_sq[i] * sol.dt;
    }
    double khat = 0.0;
    bool any = false;
    for (int i : coarse_indices(sol.steps, 8)) {
        if (f_tail[i] > 0.0) {
            khat = std::max(khat, phi_tail[i] / f_tail[i]);
            any = true;
        }
    }
    if (!any) {
        return {phi_tail[0], true};
    }
    return {khat, false};
}

double minimality_check(const solver::DiscreteSolution& sol, const geometry::ConvexDomain& domain,
                        solver::CondExpEngine& engine, double tol_scale) {
    double acc = 0.0;
    for (int i = 0; i < sol.steps; ++i) {
        const Vec w = engine.weights(i);
        const Mat& y = sol.Y[static_cast<std::size_t>(i)];
        const Mat& phi = sol.Phi[static_cast<std::size_t>(i)];
        double slice = 0.0;
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const Vec yr = y.row(r).transpose();
            if (domain.contains(yr, tol_scale * (1.0 + yr.norm())) == geometry::Region::Interior) {
                slice += w[r] * phi.row(r).norm();
            }
        }
        acc += slice * sol.dt;
    }
    return acc;
}

double domain_violation_check(const solver::DiscreteSolution& sol,
                              const geometry::ConvexDomain& domain, solver::CondExpEngine& engine) {
    double worst = 0.0;
    for (int i = 0; i <= sol.steps; ++i) {
        const Vec w = engine.weights(i);
        const Mat& y = sol.Y[static_cast<std::size_t>(i)];
        double slice = 0.0;
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            slice += w[r] * penalty::theta_of_norm(sol.M_used, domain.distance(y.row(r).transpose()));
        }
        worst = std::max(worst, slice);
    }
    return worst;
}

double equation_residual(const solver::DiscreteSolution& sol, const solver::Scenario& scenario,
                         solver::CondExpEngine& engine) {
    const int d = sol.ydim;
    const int k = sol.noise_dim;
    // Residual matrix per slice, then aggregated per the engine's population:
    // time-max of node means on the lattice, path-max then mean on paths.
    std::vector<Vec> per_slice_abs(static_cast<std::size_t>(sol.steps));
    for (int i = 0; i < sol.steps; ++i) {
        Mat ey = engine.cond_mean(i, sol.Y[static_cast<std::size_t>(i) + 1]);
        const Mat& x = engine.states(i);
        const double t = sol.dt * i;
        Vec abs_res(ey.rows());
        for (Eigen::Index r = 0; r < ey.rows(); ++r) {
            const Vec y = sol.Y[static_cast<std::size_t>(i)].row(r).transpose();
            const Vec f = scenario.driver.f(t, x.row(r).transpose(), y,
                                            z_as_matrix(sol.Z[static_cast<std::size_t>(i)],
                                                        static_cast<int>(r), d, k));
            const Vec psi = sol.Psi[static_cast<std::size_t>(i)].row(r).transpose();
            abs_res[r] = (y - ey.row(r).transpose() - sol.dt * f + sol.dt * psi).norm();
        }
        per_slice_abs[static_cast<std::size_t>(i)] = std::move(abs_res);
    }
    if (engine.kind() == solver::EngineKind::Lattice) {
        double worst = 0.0;
        for (int i = 0; i < sol.steps; ++i) {
            worst = std::max(worst, weighted_mean(per_slice_abs[static_cast<std::size_t>(i)],
                                                  engine.weights(i)));
        }
        return worst;
    }
    const int paths = engine.count(0);
    Vec path_max = Vec::Zero(paths);
    for (int i = 0; i < sol.steps; ++i) {
        path_max = path_max.cwiseMax(per_slice_abs[static_cast<std::size_t>(i)]);
    }
    return path_max.mean();
}

double bmo_estimate(const solver::DiscreteSolution& sol, solver::CondExpEngine& engine,
                    double quantile, int coarse_slices) {
    // Backward accumulation of the remaining quadratic variation of Z.
    std::vector<Vec> tail(static_cast<std::size_t>(sol.steps) + 1);
    tail[static_cast<std::size_t>(sol.steps)] = Vec::Zero(engine.count(sol.steps));
    for (int i = sol.steps - 1; i >= 0; --i) {
        Mat next(tail[static_cast<std::size_t>(i) + 1].size(), 1);
        next.col(0) = tail[static_cast<std::size_t>(i) + 1];
        Vec cur = engine.cond_mean(i, next).col(0);
        const Mat& z = sol.Z[static_cast<std::size_t>(i)];
        for (Eigen::Index r = 0; r < cur.size(); ++r) {
            cur[r] += z.row(r).squaredNorm() * sol.dt;
        }
        tail[static_cast<std::size_t>(i)] = std::move(cur);
    }
    double worst = 0.0;
    for (int i : coarse_indices(sol.steps, coarse_slices)) {
        worst = std::max(worst, weighted_quantile(tail[static_cast<std::size_t>(i)],
                                                  engine.weights(i), quantile));
    }
    return worst;
}

double cone_violation_rate(const solver::DiscreteSolution& sol,
                           const geometry::ConvexDomain& domain,
                           const DiagnosticsConfig& config) {
    long checked = 0;
    long violated = 0;
    for (int i = 0; i < sol.steps; ++i) {
        const Mat& y = sol.Y[static_cast<std::size_t>(i)];
        const Mat& phi = sol.Phi[static_cast<std::size_t>(i)];
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const Vec phir = phi.row(r).transpose();
            if (phir.norm() <= config.phi_activity_floor) continue;
            const Vec p = domain.project(y.row(r).transpose()).first;
            const auto cone = domain.normal_cone(p, geometry::default_tol(p));
            ++checked;
            if (!geometry::cone_membership(cone, phir, config.cone_tol)) ++violated;
        }
    }
    return checked == 0 ? 0.0 : static_cast<double>(violated) / static_cast<double>(checked);
}

RatioResult stability_compare(const solver::DiscreteSolution& sol_a,
                              const solver::DiscreteSolution& sol_b,
                              const solver::Scenario& scenario_a,
                              const solver::Scenario& scenario_b,
                              solver::CondExpEngine& engine) {
    if (sol_a.steps != sol_b.steps || sol_a.dt != sol_b.dt || sol_a.ydim != sol_b.ydim) {
        throw ValidationError("stability comparison requires matching grids and dimensions");
    }
    double numerator = 0.0;
    for (int i = 0; i <= sol_a.steps; ++i) {
        numerator = std::max(numerator,
                             solver::mean_squared_norm(sol_a.Y[static_cast<std::size_t>(i)]
                                                           - sol_b.Y[static_cast<std::size_t>(i)],
                                                       engine.weights(i)));
    }
    double denom = solver::mean_squared_norm(sol_a.Y[static_cast<std::size_t>(sol_a.steps)]
                                                 - sol_b.Y[static_cast<std::size_t>(sol_b.steps)],
                                             engine.weights(sol_a.steps));
    for (int i = 0; i < sol_a.steps; ++i) {
        const Mat& x = engine.states(i);
        const Vec w = engine.weights(i);
        const double t = sol_a.dt * i;
        double acc = 0.0;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const Vec y = sol_a.Y[static_cast<std::size_t>(i)].row(r).transpose();
            const Mat z = z_as_matrix(sol_a.Z[static_cast<std::size_t>(i)], static_cast<int>(r),
                                      sol_a.ydim, sol_a.noise_dim);
            const Vec df = scenario_a.driver.f(t, x.row(r).transpose(), y, z)
                           - scenario_b.driver.f(t, x.row(r).transpose(), y, z);
            acc += w[r] * df.squaredNorm();
        }
        denom += acc * sol_a.dt;
    }
    if (denom <= 0.0) {
        return {numerator, true};
    }
    return {numerator / denom, false};
}

DiagnosticsReport assemble_report(const solver::DiscreteSolution& sol,
                                  const solver::Scenario& scenario, solver::CondExpEngine& engine,
                                  const DiagnosticsConfig& config) {
    DiagnosticsReport report;
    const auto apriori = apriori_check(sol, scenario, engine);
    report.apriori_ratio = apriori.value;
    report.apriori_denominator_zero = apriori.denominator_zero;
    const auto structural = structural_check(sol, scenario, engine);
    report.structural_k_hat = structural.value;
    report.structural_denominator_zero = structural.denominator_zero;
    report.minimality_residual = minimality_check(sol, scenario.domain, engine,
                                                  config.minimality_tol_scale);
    report.domain_violation = domain_violation_check(sol, scenario.domain, engine);
    report.cone_violation_rate = cone_violation_rate(sol, scenario.domain, config);
    report.bmo_z_estimate = bmo_estimate(sol, engine, config.bmo_quantile, config.coarse_slices);
    report.equation_residual = equation_residual(sol, scenario, engine);
    return report;
}

} // namespace orbsde::diagnostics
