#pragma once

#include "orbsde/solver.hpp"

namespace orbsde::diagnostics {

/// Ratio diagnostics carry a flag instead of dividing by zero; the value is
/// then the bare numerator.
struct RatioResult {
    double value = 0.0;
    bool denominator_zero = false;
};

/// Thresholds and sampling policy for the checks. The estimates they mirror
/// are qualitative, so the cutoffs here are artifact policy, kept in one
/// place.
struct DiagnosticsConfig {
    double minimality_tol_scale = 1e-8; // interior-margin tolerance, scaled by 1 + |y|
    double cone_tol = 1e-6;             // direction tolerance for cone membership
    double phi_activity_floor = 1e-12;  // |Phi| below this counts as inactive
    double bmo_quantile = 0.99;
    int coarse_slices = 8;              // evaluation times for tail statistics
};

struct DiagnosticsReport {
    double apriori_ratio = 0.0;
    bool apriori_denominator_zero = false;
    double structural_k_hat = 0.0;
    bool structural_denominator_zero = false;
    double minimality_residual = 0.0;
    double domain_violation = 0.0;
    double cone_violation_rate = 0.0;
    double bmo_z_estimate = 0.0;
    double equation_residual = 0.0;
};

/// (sup_i mean |Y_i|^2 + mean sum |Z_i|^2 dt) over
/// (mean |xi|^2 + mean sum alpha_hat(t_i, X_i)^2 dt).
/// The conditional bound is not observable; schedule stability of this
/// unconditional ratio is the pass condition.
RatioResult apriori_check(const solver::DiscreteSolution& sol, const solver::Scenario& scenario,
                          solver::CondExpEngine& engine);

/// K_hat = max over coarse times t of
/// mean[sum_{s>=t} |Phi_s|^2 dt] / mean[sum_{s>=t} |f(s,Y_s,Z_s)|^2 dt],
/// the unconditional proxy for the structural bound.
RatioResult structural_check(const solver::DiscreteSolution& sol, const solver::Scenario& scenario,
                             solver::CondExpEngine& engine);

/// mean sum_i |Phi_i| 1{Y_i interior with margin > tol} dt.
double minimality_check(const solver::DiscreteSolution& sol, const geometry::ConvexDomain& domain,
                        solver::CondExpEngine& engine, double tol_scale = 1e-8);

/// sup_i mean[ theta_M(dist(Y_i, D)) ] with the solution's M.
double domain_violation_check(const solver::DiscreteSolution& sol,
                              const geometry::ConvexDomain& domain, solver::CondExpEngine& engine);

/// Discrete-equation residual through the engine's conditional means:
/// |Y_i - E_i[Y_{i+1}] - dt f + dt Psi_i| (max over time, averaged over
/// nodes or paths). Exact up to the Picard tolerance for solver output;
/// a genuine check for externally supplied (Y, Z, Psi) values.
double equation_residual(const solver::DiscreteSolution& sol, const solver::Scenario& scenario,
                         solver::CondExpEngine& engine);

/// max over coarse t of a high quantile of E_t[sum_{s>=t} |Z_s|^2 dt].
double bmo_estimate(const solver::DiscreteSolution& sol, solver::CondExpEngine& engine,
                    double quantile = 0.99, int coarse_slices = 8);

/// Fraction of penalty-active nodes whose Phi fails membership of the
/// normal cone at the projection of Y.
double cone_violation_rate(const solver::DiscreteSolution& sol,
                           const geometry::ConvexDomain& domain,
                           const DiagnosticsConfig& config = {});

/// sup_i mean |Y^a_i - Y^b_i|^2 over
/// (mean |xi^a - xi^b|^2 + mean sum |(f^a - f^b)(s, Y^a, Z^a)|^2 dt).
/// Scenarios must share grid, forward model, domain and reflection field.
RatioResult stability_compare(const solver::DiscreteSolution& sol_a,
                              const solver::DiscreteSolution& sol_b,
                              const solver::Scenario& scenario_a,
                              const solver::Scenario& scenario_b,
                              solver::CondExpEngine& engine);

DiagnosticsReport assemble_report(const solver::DiscreteSolution& sol,
                                  const solver::Scenario& scenario, solver::CondExpEngine& engine,
                                  const DiagnosticsConfig& config = {});

} // namespace orbsde::diagnostics
