#pragma once

#include "orbsde/forward.hpp"
#include "orbsde/geometry.hpp"
#include "orbsde/penalty.hpp"
#include "orbsde/reflection.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace orbsde::solver {

/// Driver f(t, x, y, z) with its declared growth certificate:
/// |f| <= alpha_hat(t,x) + L (|y| + |z|), or L (1 + |x|^p + |y| + |z|).
struct DriverSpec {
    int ydim = 1;
    std::function<Vec(double t, const Vec& x, const Vec& y, const Mat& z)> f;
    double lip_L = 1.0;
    double growth_p = 0.0;
    std::function<double(double t, const Vec& x)> alpha_hat;
    std::string name = "user";
};

/// Terminal map g, valued in the closed domain.
struct TerminalSpec {
    std::function<Vec(const Vec& x_terminal)> g;
    std::string name = "user";
};

enum class EngineKind { Lattice, Regression };

struct PicardParams {
    double tol = 1e-11;
    int cap = 200;
};

/// A complete problem instance. Construct with the domain and reflection
/// field, then fill the remaining fields; `validate()` samples every
/// declared bound and throws ValidationError naming the violated rule.
struct Scenario {
    forward::TimeGrid grid{};
    forward::ForwardModel model{};
    DriverSpec driver{};
    TerminalSpec terminal{};
    geometry::ConvexDomain domain;
    reflection::ReflectionField h;

    std::vector<double> schedule{8, 16, 32, 64, 128};
    double penalty_M = 0.0; // <= 0 selects the automatic choice
    EngineKind engine = EngineKind::Lattice;
    int path_count = 8192;
    int basis_degree = 2;
    PicardParams picard{};
    std::uint64_t seed = 20240901ULL;

    Scenario(geometry::ConvexDomain dom, reflection::ReflectionField field)
        : domain(std::move(dom)), h(std::move(field)) {}

    int ydim() const { return domain.dim(); }

    void validate() const;
};

/// Time-gridded (Y, Z, Phi, Psi) values, one value matrix per slice with
/// one row per lattice node or simulated path.
struct DiscreteSolution {
    EngineKind engine = EngineKind::Lattice;
    double n_used = 0.0;
    double M_used = 0.0;
    double dt = 0.0;
    int steps = 0;
    int ydim = 0;
    int noise_dim = 0;
    std::vector<Mat> Y;    // slice i: count x d
    std::vector<Mat> Z;    // slice i: count x (d*k), row-major per node; terminal slice zero
    std::vector<Mat> Phi;  // grad of the penalty at Y, slice-wise
    std::vector<Mat> Psi;  // H Phi (penalized) or per-step equation residual (reflected)
    std::vector<Mat> Yhat; // projected values, reflected output only
    std::vector<Mat> regression_coeffs; // per step, regression engine only
    double max_boundary_distance = 0.0;

    bool all_finite() const;
};

/// Conditional-expectation engine at the grid times. Values are matrices
/// with one row per node (lattice) or per path (regression).
class CondExpEngine {
public:
    virtual ~CondExpEngine() = default;
    virtual EngineKind kind() const = 0;
    virtual int steps() const = 0;
    virtual double dt() const = 0;
    virtual int count(int slice) const = 0;
    /// Node probabilities (lattice) or uniform path weights; sums to one.
    virtual Vec weights(int slice) const = 0;
    /// Forward states X at a slice, count x q.
    virtual const Mat& states(int slice) const = 0;
    /// E[v_next | slice]: maps (count(slice+1) x m) to (count(slice) x m).
    virtual Mat cond_mean(int slice, const Mat& values_next) = 0;
    /// E[v_next dW^T | slice] / dt, flattened column-major over (value j,
    /// noise c) as j * k + c.
    virtual Mat cond_mean_times_dw(int slice, const Mat& values_next) = 0;
    /// Regression coefficients of the last cond_mean call (empty otherwise).
    virtual Mat last_coefficients() const { return Mat(); }
};

std::unique_ptr<CondExpEngine> make_engine(const Scenario& scenario);

/// One implicit backward step: Z_i from the martingale increment, then the
/// damped fixed point Y = E_i[y_next] + dt f(t_i, X_i, Y, Z_i)
///                       - dt H(t_i, X_i, Y, Z_i) grad_phi_n(Y).
struct StepValues {
    Mat Y;
    Mat Z;
    Mat Phi;
};
StepValues backward_step(CondExpEngine& engine, const Scenario& scenario,
                         const penalty::PenaltyParams& params, int slice, const Mat& y_next);

/// Effective truncation radius: the configured M, or 10 (1 + max |g|) when
/// the configuration asks for the automatic choice.
double resolve_penalty_M(const Scenario& scenario, CondExpEngine& engine);

/// Grid steps so that n_max dt <= 4, keeping the implicit solve contractive.
int recommended_steps(double horizon, int configured_steps, double n_max);

DiscreteSolution solve_penalized(const Scenario& scenario, double n, CondExpEngine& engine);

struct ConvergenceRow {
    double n = 0.0;
    double dt = 0.0;
    Vec y0;
    double cauchy_delta = 0.0; // vs previous schedule entry; NaN on the first row
    double minimality_residual = 0.0;
    double domain_violation = 0.0;
    double structural_k_hat = 0.0;
    double wall_ms = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    bool cauchy_warning = false;  // decrement non-decreasing across the last refinement
    bool truncation_warning = false; // some iterate reached distance > M/2
};

/// Penalization limit: solves the schedule with common random numbers,
/// monitors the Cauchy decrement, and returns the finest solution with the
/// projected values and the residual-extracted reflection term.
std::pair<DiscreteSolution, ConvergenceReport> solve_reflected(const Scenario& scenario,
                                                               CondExpEngine& engine);

/// Weighted mean of |row|^2 over nodes of a slice.
double mean_squared_norm(const Mat& values, const Vec& weights);

} // namespace orbsde::solver
