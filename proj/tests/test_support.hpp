#pragma once

#include "orbsde/geometry.hpp"
#include "orbsde/rng.hpp"

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace testsupport {

using orbsde::Mat;
using orbsde::Vec;

// Deterministic scalar/vector draws for property tests.
struct Draw {
    std::uint64_t key;
    std::uint64_t ctr = 0;
    explicit Draw(std::uint64_t seed) : key(orbsde::rng::stream_key(seed, 17)) {}
    double uniform() { return orbsde::rng::uniform01(orbsde::rng::prf(key, ctr++)); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return orbsde::rng::normal(key, ctr++); }
    int index(int n) { return static_cast<int>(orbsde::rng::prf(key, ctr++) % static_cast<std::uint64_t>(n)); }
    Vec gaussian(int dim) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = normal();
        return v;
    }
    Vec unit(int dim) {
        Vec v = gaussian(dim);
        while (v.norm() < 1e-8) v = gaussian(dim);
        return v / v.norm();
    }
};

// Brute-force projection oracle: enumerate every constraint subset, solve
// the equality KKT system by Gaussian elimination, keep candidates that are
// feasible with nonnegative multipliers, return the closest. Written
// against the same math but sharing no solver code with the library.
inline std::pair<Vec, double> qp_project_oracle(const Vec& y,
                                                const std::vector<orbsde::geometry::Halfspace>& hs) {
    const int m = static_cast<int>(hs.size());
    const int d = static_cast<int>(y.size());
    auto feasible = [&](const Vec& x) {
        for (const auto& h : hs) {
            if (h.a.dot(x) - h.b < -1e-10 * (1.0 + x.norm())) return false;
        }
        return true;
    };

    double best = std::numeric_limits<double>::infinity();
    Vec best_x = y;
    if (feasible(y)) return {y, 0.0};

    for (unsigned mask = 1; mask < (1u << m); ++mask) {
        std::vector<int> subset;
        for (int i = 0; i < m; ++i) {
            if (mask & (1u << i)) subset.push_back(i);
        }
        const int k = static_cast<int>(subset.size());
        if (k > d) continue;

        // Gram system (A A^T) mu = b - A y, dense Gaussian elimination.
        std::vector<std::vector<double>> g(k, std::vector<double>(k + 1, 0.0));
        for (int r = 0; r < k; ++r) {
            for (int c = 0; c < k; ++c) g[r][c] = hs[subset[r]].a.dot(hs[subset[c]].a);
            g[r][k] = hs[subset[r]].b - hs[subset[r]].a.dot(y);
        }
        bool singular = false;
        for (int col = 0; col < k; ++col) {
            int pivot = col;
            for (int r = col + 1; r < k; ++r) {
                if (std::abs(g[r][col]) > std::abs(g[pivot][col])) pivot = r;
            }
            if (std::abs(g[pivot][col]) < 1e-11) {
                singular = true;
                break;
            }
            std::swap(g[col], g[pivot]);
            for (int r = 0; r < k; ++r) {
                if (r == col) continue;
                const double f = g[r][col] / g[col][col];
                for (int c = col; c <= k; ++c) g[r][c] -= f * g[col][c];
            }
        }
        if (singular) continue;
        Vec mu(k);
        bool nonneg = true;
        for (int r = 0; r < k; ++r) {
            mu[r] = g[r][k] / g[r][r];
            if (mu[r] < -1e-10) nonneg = false;
        }
        if (!nonneg) continue;
        Vec x = y;
        for (int r = 0; r < k; ++r) x += mu[r] * hs[subset[r]].a;
        if (!feasible(x)) continue;
        const double dist = (y - x).norm();
        if (dist < best) {
            best = dist;
            best_x = x;
        }
    }
    return {best_x, best};
}

// Random half-space domain with a guaranteed strictly interior anchor.
inline orbsde::geometry::ConvexDomain random_halfspace_domain(Draw& draw, int dim, int count,
                                                              Vec* anchor_out = nullptr) {
    Vec anchor = draw.gaussian(dim);
    std::vector<orbsde::geometry::Halfspace> hs(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Vec a = draw.unit(dim);
        const double margin = draw.uniform(0.1, 1.5);
        hs[static_cast<std::size_t>(i)] = {a, a.dot(anchor) - margin};
    }
    if (anchor_out) *anchor_out = anchor;
    return orbsde::geometry::ConvexDomain::halfspace_intersection(dim, hs);
}

// Random switching costs satisfying the structure condition, signed costs
// included: c_ij = d_i - d_j + s_ij with s_ij in [0.8, 1.2].
inline Mat random_switching_costs(Draw& draw, int d) {
    Vec shift = draw.gaussian(d);
    Mat c(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            c(i, j) = i == j ? 0.0 : shift[i] - shift[j] + draw.uniform(0.8, 1.2);
        }
    }
    return c;
}

} // namespace testsupport
