#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orbsde/diagnostics.hpp"
#include "orbsde/errors.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace orbsde;
using namespace orbsde::solver;
using namespace orbsde::diagnostics;

namespace {

DriverSpec zero_driver(int d) {
    DriverSpec spec;
    spec.ydim = d;
    spec.f = [d](double, const Vec&, const Vec&, const Mat&) { return Vec::Zero(d); };
    spec.lip_L = 0.0;
    spec.alpha_hat = [](double, const Vec&) { return 0.0; };
    return spec;
}

Scenario whole_space_martingale(int steps) {
    Scenario scn(geometry::ConvexDomain::whole_space(1), reflection::ReflectionField::identity(1));
    scn.grid = {1.0, steps};
    scn.model = forward::ForwardModel::brownian(1);
    scn.driver = zero_driver(1);
    TerminalSpec t;
    t.g = [](const Vec& x) { return x; }; // xi = W_T
    scn.terminal = t;
    scn.penalty_M = 10.0;
    scn.seed = 55;
    return scn;
}

Scenario constant_terminal_scn(const Vec& c, int steps) {
    Scenario scn(geometry::ConvexDomain::whole_space(static_cast<int>(c.size())),
                 reflection::ReflectionField::identity(static_cast<int>(c.size())));
    scn.grid = {1.0, steps};
    scn.model = forward::ForwardModel::brownian(1);
    scn.driver = zero_driver(static_cast<int>(c.size()));
    TerminalSpec t;
    t.g = [c](const Vec&) { return c; };
    scn.terminal = t;
    scn.penalty_M = 10.0;
    scn.seed = 56;
    return scn;
}

} // namespace

TEST_CASE("a priori ratio is one for a deterministic terminal") {
    auto scn = constant_terminal_scn(2.0 * Vec::Ones(1), 16);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 8.0, *engine);
    auto r = apriori_check(sol, scn, *engine);
    CHECK_FALSE(r.denominator_zero);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a priori ratio is two for the Brownian terminal") {
    auto scn = whole_space_martingale(32);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 8.0, *engine);
    auto r = apriori_check(sol, scn, *engine);
    // Y_t = W_t and Z = 1 exactly on the lattice: (T + T) / T.
    CHECK_FALSE(r.denominator_zero);
    CHECK(r.value == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("a priori flags a vanishing denominator") {
    auto scn = constant_terminal_scn(Vec::Zero(1), 8);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 8.0, *engine);
    auto r = apriori_check(sol, scn, *engine);
    CHECK(r.denominator_zero);
    CHECK(r.value == 0.0);
}

TEST_CASE("structural check is zero (flagged) for interior martingales") {
    auto scn = constant_terminal_scn(2.0 * Vec::Ones(1), 8);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 8.0, *engine);
    auto r = structural_check(sol, scn, *engine);
    CHECK(r.denominator_zero); // f = 0 everywhere
    CHECK(r.value == 0.0);
}

TEST_CASE("minimality and domain violation vanish on interior solutions") {
    auto scn = whole_space_martingale(16);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 8.0, *engine);
    CHECK(minimality_check(sol, scn.domain, *engine) == 0.0);
    CHECK(domain_violation_check(sol, scn.domain, *engine) == 0.0);
    CHECK(cone_violation_rate(sol, scn.domain) == 0.0);
}

TEST_CASE("equation residual of solver output is at solver tolerance") {
    auto scn = whole_space_martingale(32);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 16.0, *engine);
    CHECK(equation_residual(sol, scn, *engine) <= 1e-10);
}

TEST_CASE("bmo estimate matches the deterministic-Z case") {
    auto scn = whole_space_martingale(32);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 8.0, *engine);
    // Z = 1: remaining quadratic variation from 0 is T.
    CHECK(bmo_estimate(sol, *engine) == doctest::Approx(1.0).epsilon(1e-12));

    auto flat = constant_terminal_scn(Vec::Ones(1), 16);
    auto engine2 = make_engine(flat);
    auto sol2 = solve_penalized(flat, 8.0, *engine2);
    CHECK(bmo_estimate(sol2, *engine2) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("stability compare: identical data reports zero, shifts report ratio about one") {
    auto scn = whole_space_martingale(16);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 8.0, *engine);
    auto same = stability_compare(sol, sol, scn, scn, *engine);
    CHECK(same.denominator_zero);
    CHECK(same.value == 0.0);

    // Deterministic interior shift of the terminal: the difference is the
    // shift itself, so the unweighted ratio is exactly one.
    auto scn_b = whole_space_martingale(16);
    TerminalSpec shifted;
    shifted.g = [](const Vec& x) { return Vec(x.array() + 0.25); };
    scn_b.terminal = shifted;
    auto sol_b = solve_penalized(scn_b, 8.0, *engine);
    auto r = stability_compare(sol, sol_b, scn, scn_b, *engine);
    CHECK_FALSE(r.denominator_zero);
    CHECK(r.value <= 1.0 + 10.0 / 16.0);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-10));

    // Perturbed driver on a third scenario: bounded ratio, shrinking gap.
    auto scn_c = whole_space_martingale(16);
    DriverSpec eps_driver;
    eps_driver.ydim = 1;
    const double delta = 0.01;
    eps_driver.f = [delta](double, const Vec&, const Vec&, const Mat&) {
        return Vec(delta * Vec::Ones(1));
    };
    eps_driver.lip_L = 0.0;
    eps_driver.alpha_hat = [delta](double, const Vec&) { return delta; };
    scn_c.driver = eps_driver;
    auto sol_c = solve_penalized(scn_c, 8.0, *engine);
    auto rc = stability_compare(sol, sol_c, scn, scn_c, *engine);
    CHECK_FALSE(rc.denominator_zero);
    CHECK(rc.value <= 2.0);

    // Mismatched grids are rejected.
    auto scn_d = whole_space_martingale(8);
    auto engine_d = make_engine(scn_d);
    auto sol_d = solve_penalized(scn_d, 8.0, *engine_d);
    CHECK_THROWS_AS(stability_compare(sol, sol_d, scn, scn_d, *engine), ValidationError);
}

TEST_CASE("assembled report carries every field") {
    auto scn = whole_space_martingale(16);
    auto engine = make_engine(scn);
    auto sol = solve_penalized(scn, 8.0, *engine);
    auto report = assemble_report(sol, scn, *engine);
    CHECK(report.apriori_ratio == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(report.minimality_residual == 0.0);
    CHECK(report.domain_violation == 0.0);
    CHECK(report.cone_violation_rate == 0.0);
    CHECK(report.bmo_z_estimate == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(report.equation_residual <= 1e-10);
    CHECK(std::isfinite(report.structural_k_hat));
}
