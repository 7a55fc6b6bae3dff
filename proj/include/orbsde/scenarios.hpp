#pragma once

#include "orbsde/solver.hpp"

#include <functional>
#include <string>
#include <vector>

namespace orbsde::scenarios {

struct FixtureCheck {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string note;
};

struct FixtureResult {
    std::string fixture;
    bool pass = true;
    std::vector<FixtureCheck> checks;
    std::string note;

    void add(const std::string& name, double value, double threshold, bool check_pass,
             const std::string& note_ = "");
};

/// A verification fixture: a complete scenario plus reference values with
/// an independent oracle. Oracles share nothing with the solver beyond the
/// lattice itself.
struct Fixture {
    std::string name;
    solver::Scenario scenario;
    std::function<FixtureResult()> run;
};

/// f = 0 on the d=2 switching domain: the lattice solve must reproduce the
/// terminal expectation exactly and keep the penalty inactive.
Fixture fixture_martingale();

/// d=1, D = (0, inf), H = 1, f = -1, g = 0: the penalized solution sits
/// near -1/n (independent stiff-ODE oracle), the reflected limit at 0.
Fixture fixture_constant_push();

/// Optimal switching against a lattice dynamic-programming oracle.
Fixture fixture_switching(const Mat& costs, const Vec& f_const, const Vec& g_const,
                          double horizon, int steps);
Fixture fixture_switching(); // d=2, costs 0.1, f=(0.05,-0.05), g=0, T=1, N=128

/// Discontinuous reflection on the wedge in R^3 with two closed-form
/// solutions; checks both and records which one the solver selects.
Fixture fixture_counterexample();

std::vector<Fixture> all_fixtures();

// --- Independent oracles -------------------------------------------------

/// Backward integration of the scalar penalized equation of the
/// constant-push fixture (dy/dt = 1 + n min(y, 0) for moderate |y|),
/// from y(T) = 0 down to t = 0. Plain RK4 with many substeps.
double ode_penalized_push_oracle(double n, double truncation_M, double horizon, int substeps);

/// Dynamic programming value of the switching problem on the lattice:
/// V_i^l = max(E_i[V_{i+1}^l] + dt f^l, max_{j != l} V_i^j - c^{lj}),
/// iterated to a per-slice fixed point. Returns one value matrix per slice.
std::vector<Mat> dp_switching_oracle(const forward::Lattice& lattice, const Mat& costs,
                                     const std::function<Vec(double, const Vec&)>& running_reward,
                                     const std::function<Vec(const Vec&)>& terminal,
                                     const std::function<Vec(int, int)>& state_at);

} // namespace orbsde::scenarios
