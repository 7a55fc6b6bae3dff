#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orbsde/scenarios.hpp"

#include <chrono>
#include <cmath>

using namespace orbsde;
using namespace orbsde::scenarios;

TEST_CASE("stiff ODE oracle reproduces the closed-form penalized value") {
    // For the half-line push the penalized equation is linear below zero:
    // y(0) = (exp(-n T) - 1) / n.
    for (double n : {4.0, 16.0, 64.0}) {
        const double oracle = ode_penalized_push_oracle(n, 10.0, 1.0, 100000);
        const double exact = (std::exp(-n) - 1.0) / n;
        CHECK(oracle == doctest::Approx(exact).epsilon(1e-8));
    }
}

TEST_CASE("DP oracle is deterministic") {
    auto fixture = fixture_switching();
    forward::Lattice lattice(fixture.scenario.grid, 1);
    auto state_at = [&lattice](int slice, int node) {
        Vec x(1);
        x << lattice.brownian(slice, node)[0];
        return x;
    };
    Vec f(2);
    f << 0.05, -0.05;
    auto reward = [f](double, const Vec&) { return f; };
    auto terminal = [](const Vec&) { return Vec(Vec::Zero(2)); };
    auto a = dp_switching_oracle(lattice, fixture.scenario.domain.switching_costs(), reward,
                                 terminal, state_at);
    auto b = dp_switching_oracle(lattice, fixture.scenario.domain.switching_costs(), reward,
                                 terminal, state_at);
    CHECK((a[0] - b[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("every fixture passes and finishes quickly") {
    for (auto& fixture : all_fixtures()) {
        const auto start = std::chrono::steady_clock::now();
        auto result = fixture.run();
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        INFO(fixture.name);
        for (const auto& check : result.checks) {
            INFO(check.name << ": value " << check.value << " threshold " << check.threshold);
            CHECK(check.pass);
        }
        CHECK(result.pass);
        CHECK(secs < 60.0);
    }
}

TEST_CASE("fixture runs are reproducible") {
    auto once = fixture_counterexample().run();
    auto twice = fixture_counterexample().run();
    REQUIRE(once.checks.size() == twice.checks.size());
    for (std::size_t i = 0; i < once.checks.size(); ++i) {
        CHECK(once.checks[i].value == twice.checks[i].value);
    }
    CHECK(once.note == twice.note);
}
