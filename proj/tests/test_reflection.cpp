#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orbsde/errors.hpp"
#include "orbsde/reflection.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace orbsde;
using namespace orbsde::reflection;
using testsupport::Draw;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

Vec v3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

Mat symmetric_costs2() {
    Mat c(2, 2);
    c << 0.0, 1.0, 1.0, 0.0;
    return c;
}

// Random point of the facet: convex combination of its vertices, embedded
// back into R^d with a random shift along (1,...,1).
Vec facet_point(const SwitchingH& h, int constraint, Draw& draw, double shift) {
    auto verts = h.facet_vertices(constraint);
    Vec u = Vec::Zero(h.dim() - 1);
    double total = 0.0;
    for (int v : verts) {
        const double w = draw.uniform(0.05, 1.0);
        u += w * h.vertices()[static_cast<std::size_t>(v)].point;
        total += w;
    }
    u /= total;
    Vec y(h.dim());
    for (int i = 0; i + 1 < h.dim(); ++i) y[i] = u[i] + shift;
    y[h.dim() - 1] = shift;
    return y;
}

} // namespace

TEST_CASE("d=2 construction matches the contract") {
    SwitchingH h = build_switching_h(symmetric_costs2());
    REQUIRE(h.vertices().size() == 2);

    // Vertex at -1 carries facet C^{12} and the projector onto e1; vertex at
    // +1 carries C^{21} and the projector onto e2.
    for (const auto& vert : h.vertices()) {
        REQUIRE(vert.point.size() == 1);
        REQUIRE(vert.active_pairs.size() == 1);
        if (vert.point[0] == doctest::Approx(-1.0)) {
            CHECK(vert.active_pairs[0] == std::make_pair(0, 1));
            CHECK((vert.projector - (Mat(2, 2) << 1, 0, 0, 0).finished()).norm() == 0.0);
        } else {
            CHECK(vert.point[0] == doctest::Approx(1.0));
            CHECK(vert.active_pairs[0] == std::make_pair(1, 0));
            CHECK((vert.projector - (Mat(2, 2) << 0, 0, 0, 1).finished()).norm() == 0.0);
        }
    }

    // y = (0,1) lies on C^{12}: H sends e1 - e2 to e1.
    Mat hy = h.evaluate(v2(0.0, 1.0));
    CHECK((hy * v2(1.0, -1.0) - v2(1.0, 0.0)).norm() <= 1e-12);

    // Interior evaluation interpolates between the vertex projectors.
    Mat mid = h.evaluate(v2(0.0, 0.0));
    CHECK((mid - 0.5 * Mat::Identity(2, 2)).norm() <= 1e-12);
}

TEST_CASE("facet identity holds at random facet points for d in {2,3}") {
    Draw draw(41);
    for (int d : {2, 3}) {
        for (int rep = 0; rep < 3; ++rep) {
            Mat costs = testsupport::random_switching_costs(draw, d);
            SwitchingH h(costs);
            for (int c = 0; c < h.constraint_count(); ++c) {
                auto [l, j] = h.pair_of_constraint(c);
                REQUIRE(!h.facet_vertices(c).empty());
                for (int s = 0; s < 40; ++s) {
                    Vec y = facet_point(h, c, draw, draw.uniform(-2.0, 2.0));
                    Vec el = Vec::Zero(d), ej = Vec::Zero(d);
                    el[l] = 1.0;
                    ej[j] = 1.0;
                    CHECK((h.evaluate(y) * (el - ej) - el).norm() <= 1e-10);
                }
            }
        }
    }
}

TEST_CASE("interpolation agrees across faces meeting at shared points") {
    Draw draw(42);
    for (int rep = 0; rep < 4; ++rep) {
        Mat costs = testsupport::random_switching_costs(draw, 3);
        SwitchingH h(costs);
        // Every vertex joins all its facets: weights seeded from each facet
        // must coincide there and on shared edges.
        for (std::size_t v = 0; v < h.vertices().size(); ++v) {
            const Vec& point = h.vertices()[v].point;
            std::vector<Mat> values;
            for (int c = 0; c < h.constraint_count(); ++c) {
                auto verts = h.facet_vertices(c);
                if (std::find(verts.begin(), verts.end(), static_cast<int>(v)) == verts.end()) {
                    continue;
                }
                auto weights = h.barycentric_weights_on_face({c}, point);
                Mat value = Mat::Zero(3, 3);
                for (const auto& [idx, w] : weights) {
                    value += w * h.vertices()[static_cast<std::size_t>(idx)].projector;
                }
                values.push_back(value);
            }
            REQUIRE(values.size() >= 2);
            for (std::size_t i = 1; i < values.size(); ++i) {
                CHECK((values[i] - values[0]).norm() <= 1e-12);
            }
        }
    }
}

TEST_CASE("barycentric weights are a convex combination on the facet") {
    Draw draw(43);
    Mat costs = testsupport::random_switching_costs(draw, 3);
    SwitchingH h(costs);
    for (int c = 0; c < h.constraint_count(); ++c) {
        auto verts = h.facet_vertices(c);
        for (int s = 0; s < 20; ++s) {
            Vec y = facet_point(h, c, draw, 0.0);
            Vec u(2);
            u << y[0], y[1];
            auto weights = h.barycentric_weights(u);
            double total = 0.0;
            for (const auto& [idx, w] : weights) {
                CHECK(w >= -1e-12);
                total += w;
                CHECK(std::find(verts.begin(), verts.end(), idx) != verts.end());
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("construction scales to d = 4") {
    Draw draw(46);
    Mat costs = testsupport::random_switching_costs(draw, 4);
    SwitchingH h(costs);
    CHECK(h.vertices().size() >= 4);
    // Facet identity and valid barycentric weights across all facets.
    for (int c = 0; c < h.constraint_count(); ++c) {
        auto [l, j] = h.pair_of_constraint(c);
        REQUIRE(!h.facet_vertices(c).empty());
        for (int s = 0; s < 25; ++s) {
            Vec y = facet_point(h, c, draw, draw.uniform(-1.0, 1.0));
            Vec el = Vec::Zero(4), ej = Vec::Zero(4);
            el[l] = 1.0;
            ej[j] = 1.0;
            CHECK((h.evaluate(y) * (el - ej) - el).norm() <= 1e-10);
        }
    }
    // Interpolation agrees across faces at shared vertices.
    for (std::size_t v = 0; v < h.vertices().size(); ++v) {
        const Vec& point = h.vertices()[v].point;
        Mat ref;
        bool have_ref = false;
        for (int c = 0; c < h.constraint_count(); ++c) {
            auto verts = h.facet_vertices(c);
            if (std::find(verts.begin(), verts.end(), static_cast<int>(v)) == verts.end()) continue;
            auto weights = h.barycentric_weights_on_face({c}, point);
            Mat value = Mat::Zero(4, 4);
            for (const auto& [idx, w] : weights) {
                value += w * h.vertices()[static_cast<std::size_t>(idx)].projector;
            }
            if (!have_ref) {
                ref = value;
                have_ref = true;
            } else {
                CHECK((value - ref).norm() <= 1e-12);
            }
        }
    }
}

TEST_CASE("translation invariance along the diagonal") {
    Draw draw(44);
    Mat costs = testsupport::random_switching_costs(draw, 3);
    SwitchingH h(costs);
    for (int s = 0; s < 50; ++s) {
        Vec y = 2.0 * draw.gaussian(3);
        Mat base = h.evaluate(y);
        const double shift = draw.uniform(-5.0, 5.0);
        CHECK((h.evaluate(y + shift * Vec::Ones(3)) - base).norm() <= 1e-13);
    }
}

TEST_CASE("obliqueness validation") {
    Mat costs = symmetric_costs2();
    auto domain = geometry::ConvexDomain::switching_polytope(costs);

    auto identity = ReflectionField::identity(2);
    auto rep = validate_obliqueness(identity, domain, 32);
    CHECK(rep.eta_hat == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.violations.empty());

    // Vertex projector against the facet normal: H u . u = 1/2.
    SwitchingH h(costs);
    Vec upsilon = v2(-1.0, 1.0) / std::sqrt(2.0);
    const auto& vert = h.vertices()[h.vertices()[0].point[0] < 0 ? 0 : 1];
    CHECK(upsilon.dot(vert.projector * upsilon) == doctest::Approx(0.5).epsilon(1e-12));

    auto field = ReflectionField::switching(costs);
    auto rep2 = validate_obliqueness(field, domain, 48);
    CHECK(rep2.eta_hat > 0.0);
    CHECK(rep2.violations.empty());

    // The declared eta is honored on random structured costs too.
    Draw draw(45);
    for (int rep_i = 0; rep_i < 2; ++rep_i) {
        Mat c3 = testsupport::random_switching_costs(draw, 3);
        auto dom3 = geometry::ConvexDomain::switching_polytope(c3);
        auto f3 = ReflectionField::switching(c3);
        auto r3 = validate_obliqueness(f3, dom3, 48);
        CHECK(r3.eta_hat > 0.0);
        CHECK(r3.violations.empty());
    }
}

TEST_CASE("counterexample wedge field evaluates per facet") {
    auto field = ReflectionField::counterexample_wedge();
    // Interior of F1: identity.
    CHECK((field.evaluate(0.0, Vec(1), v3(0.0, 2.0, 0.5), Mat::Zero(3, 1))
           - Mat::Identity(3, 3)).norm() <= 1e-12);
    // F2 away from the corner: the constant oblique matrix maps the outward
    // normal direction to the y1 axis; H u . u = 1/2 for the unit normal.
    Vec n = v3(1.0, 1.0, 0.0) / std::sqrt(2.0);
    Mat hf2 = field.evaluate(0.0, Vec(1), v3(1.0, -1.0, 0.0), Mat::Zero(3, 1));
    CHECK((hf2 * v3(1.0, 1.0, 0.0) - v3(1.0, 0.0, 0.0)).norm() <= 1e-12);
    CHECK(n.dot(hf2 * n) == doctest::Approx(0.5).epsilon(1e-12));
    // Corner: identity, declared discontinuous there.
    CHECK((field.evaluate(0.0, Vec(1), v3(0.0, 0.0, 1.0), Mat::Zero(3, 1))
           - Mat::Identity(3, 3)).norm() <= 1e-12);
    CHECK(field.near_discontinuity(0.0, Vec(1), v3(1e-9, -1e-9, 1.0)));
    CHECK_FALSE(field.near_discontinuity(0.0, Vec(1), v3(1.0, -1.0, 0.0)));
}

TEST_CASE("limiting cone membership") {
    std::vector<geometry::Halfspace> hs(1);
    hs[0].a = Vec::Ones(1);
    hs[0].b = 0.0;
    auto line = geometry::ConvexDomain::halfspace_intersection(1, hs);
    auto identity = ReflectionField::identity(1);

    Vec zero1 = Vec::Zero(1);
    // Interior: the cone is {0}.
    CHECK(limiting_cone_membership(identity, line, 0.0, Vec(0), Vec::Ones(1), Mat::Zero(1, 1),
                                   zero1, 0.1, 1e-8));
    CHECK_FALSE(limiting_cone_membership(identity, line, 0.0, Vec(0), Vec::Ones(1),
                                         Mat::Zero(1, 1), -Vec::Ones(1), 0.1, 1e-8));
    // Continuous H: membership reduces to H applied to the outward cone.
    Vec psi_out(1), psi_in(1);
    psi_out << -3.0;
    psi_in << 1.0;
    CHECK(limiting_cone_membership(identity, line, 0.0, Vec(0), zero1, Mat::Zero(1, 1), psi_out,
                                   0.1, 1e-8));
    CHECK_FALSE(limiting_cone_membership(identity, line, 0.0, Vec(0), zero1, Mat::Zero(1, 1),
                                         psi_in, 0.1, 1e-8));
    CHECK_THROWS_AS(limiting_cone_membership(identity, line, 0.0, Vec(0), -Vec::Ones(1),
                                             Mat::Zero(1, 1), psi_out, 0.1, 1e-8),
                    ValidationError);
}

TEST_CASE("degenerate switching costs are rejected") {
    Mat zero = Mat::Zero(3, 3);
    CHECK_THROWS_WITH_AS(SwitchingH{zero}, doctest::Contains("structure condition"),
                         ValidationError);
}
