#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orbsde/penalty.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace orbsde;
using namespace orbsde::penalty;
using testsupport::Draw;

namespace {

geometry::ConvexDomain half_line() {
    std::vector<geometry::Halfspace> hs(1);
    hs[0].a = Vec::Ones(1);
    hs[0].b = 0.0;
    return geometry::ConvexDomain::halfspace_intersection(1, hs);
}

Vec v1(double a) {
    Vec v(1);
    v << a;
    return v;
}

} // namespace

TEST_CASE("huber function branch values") {
    CHECK(theta(1.0, Vec::Zero(3)) == 0.0);
    CHECK(theta_of_norm(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15)); // branches agree at |h| = M
    CHECK(theta_of_norm(1.0, 3.0) == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("phi branch values on the half-line") {
    auto line = half_line();
    CHECK(phi(PenaltyParams(4.0, 1.0), line, v1(0.3)) == 0.0);
    CHECK(phi(PenaltyParams(4.0, 1.0), line, v1(-0.5)) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(phi(PenaltyParams(2.0, 1.0), line, v1(-3.0)) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("grad phi branch values on the half-line") {
    auto line = half_line();
    CHECK(grad_phi(PenaltyParams(4.0, 1.0), line, v1(0.3)).norm() == 0.0);
    CHECK(grad_phi(PenaltyParams(4.0, 1.0), line, v1(-0.5))[0] == doctest::Approx(-2.0));
    CHECK(grad_phi(PenaltyParams(2.0, 1.0), line, v1(-3.0))[0] == doctest::Approx(-2.0));
}

TEST_CASE("gradient matches central finite differences off the seams") {
    Draw draw(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 1 + draw.index(4);
        Vec anchor;
        auto domain = testsupport::random_halfspace_domain(draw, dim, 1 + draw.index(5), &anchor);
        PenaltyParams params(draw.uniform(0.5, 4.0), draw.uniform(0.5, 2.0));
        for (int i = 0; i < 30; ++i) {
            Vec y = anchor + draw.uniform(0.0, 4.0) * draw.unit(dim);
            const double dist = domain.distance(y);
            if (dist < 1e-3 || std::abs(dist - params.M) < 1e-3) continue; // seam guard
            Vec g = grad_phi(params, domain, y);
            const double h = 1e-6 * (1.0 + y.norm());
            Vec fd(dim);
            for (int c = 0; c < dim; ++c) {
                Vec e = Vec::Zero(dim);
                e[c] = h;
                fd[c] = (phi(params, domain, y + e) - phi(params, domain, y - e)) / (2.0 * h);
            }
            const double scale = std::max(1e-8, g.norm());
            CHECK((g - fd).norm() / scale <= 1e-5);
        }
    }
}

TEST_CASE("phi is convex along random segments") {
    Draw draw(32);
    Vec anchor;
    auto domain = testsupport::random_halfspace_domain(draw, 3, 4, &anchor);
    PenaltyParams params(2.0, 1.0);
    for (int i = 0; i < 400; ++i) {
        Vec a = anchor + 5.0 * draw.gaussian(3);
        Vec b = anchor + 5.0 * draw.gaussian(3);
        const double mid = phi(params, domain, 0.5 * (a + b));
        CHECK(mid <= 0.5 * (phi(params, domain, a) + phi(params, domain, b)) + 1e-10);
    }
}

TEST_CASE("gradient magnitude is capped at n M and equals n dist below it") {
    Draw draw(33);
    Vec anchor;
    auto domain = testsupport::random_halfspace_domain(draw, 2, 4, &anchor);
    PenaltyParams params(3.0, 0.8);
    for (int i = 0; i < 300; ++i) {
        Vec y = anchor + draw.uniform(0.0, 5.0) * draw.unit(2);
        Vec g = grad_phi(params, domain, y);
        CHECK(g.norm() <= params.n * params.M + 1e-12);
        const double dist = domain.distance(y);
        if (dist > 0.0 && dist <= params.M) {
            CHECK(g.norm() == doctest::Approx(params.n * dist).epsilon(1e-10));
        }
    }
}

TEST_CASE("gradient points into the normal cone at the projection") {
    Draw draw(34);
    Vec anchor;
    auto domain = testsupport::random_halfspace_domain(draw, 3, 5, &anchor);
    PenaltyParams params(2.0, 1.5);
    int active = 0;
    for (int i = 0; i < 200; ++i) {
        Vec y = anchor + 6.0 * draw.unit(3);
        Vec g = grad_phi(params, domain, y);
        if (g.norm() <= 1e-12) continue;
        ++active;
        Vec p = domain.project(y).first;
        auto cone = domain.normal_cone(p, geometry::default_tol(p));
        CHECK(geometry::cone_membership(cone, g, 1e-7));
    }
    CHECK(active > 50);
}

TEST_CASE("n = 0 and unbounded M behave as documented") {
    auto line = half_line();
    PenaltyParams off;
    CHECK(phi(off, line, v1(-2.0)) == 0.0);
    CHECK(grad_phi(off, line, v1(-2.0)).norm() == 0.0);

    PenaltyParams quadratic(2.0, std::numeric_limits<double>::infinity());
    CHECK(phi(quadratic, line, v1(-3.0)) == doctest::Approx(9.0));
    CHECK(grad_phi(quadratic, line, v1(-3.0))[0] == doctest::Approx(-6.0));
}
