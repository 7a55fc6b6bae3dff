#include "orbsde/geometry.hpp"

#include "orbsde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace orbsde::geometry {

namespace {

constexpr double kEps = 1e-12;

std::string triple_message(int i, int j, int l, double value) {
    std::ostringstream os;
    os << "switching-cost structure condition violated: c[" << i << "][" << j
       << "] + c[" << j << "][" << l << "] - c[" << i << "][" << l
       << "] = " << value << " must be > 0";
    return os.str();
}

} // namespace

void check_switching_structure(const Mat& costs) {
    const Eigen::Index d = costs.rows();
    if (costs.cols() != d || d < 1) {
        throw ValidationError("switching cost matrix must be square and non-empty");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        if (std::abs(costs(i, i)) > 0.0) {
            throw ValidationError("switching-cost structure condition violated: diagonal costs must be zero");
        }
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            if (j == i) continue;
            for (Eigen::Index l = 0; l < d; ++l) {
                if (l == j) continue;
                const double v = costs(i, j) + costs(j, l) - costs(i, l);
                if (!(v > 0.0)) {
                    throw ValidationError(triple_message(static_cast<int>(i), static_cast<int>(j),
                                                         static_cast<int>(l), v));
                }
            }
        }
    }
}

void ConvexDomain::check_dim(const Vec& y) const {
    if (y.size() != dim_) {
        std::ostringstream os;
        os << "dimension mismatch: point has dim " << y.size() << ", domain has dim " << dim_;
        throw ValidationError(os.str());
    }
}

ConvexDomain ConvexDomain::halfspace_intersection(int dim, std::vector<Halfspace> halfspaces) {
    if (dim < 1) throw ValidationError("domain dimension must be >= 1");
    ConvexDomain d;
    d.kind_ = DomainKind::HalfspaceIntersection;
    d.dim_ = dim;
    for (auto& h : halfspaces) {
        if (h.a.size() != dim) throw ValidationError("half-space normal has wrong dimension");
        const double na = h.a.norm();
        if (na < kEps) throw ValidationError("half-space normal must be nonzero");
        h.a /= na;
        h.b /= na;
    }
    d.halfspaces_ = std::move(halfspaces);
    d.find_interior_point();
    return d;
}

ConvexDomain ConvexDomain::whole_space(int dim) {
    return halfspace_intersection(dim, {});
}

ConvexDomain ConvexDomain::switching_polytope(const Mat& costs) {
    check_switching_structure(costs);
    const int d = static_cast<int>(costs.rows());
    if (d < 2) throw ValidationError("switching polytope needs dimension >= 2");
    std::vector<Halfspace> hs;
    for (int l = 0; l < d; ++l) {
        for (int j = 0; j < d; ++j) {
            if (j == l) continue;
            Vec a = Vec::Zero(d);
            a[l] = 1.0;
            a[j] = -1.0;
            hs.push_back({std::move(a), -costs(l, j)});
        }
    }
    ConvexDomain dom = halfspace_intersection(d, std::move(hs));
    dom.kind_ = DomainKind::SwitchingPolytope;
    dom.costs_ = costs;
    return dom;
}

ConvexDomain ConvexDomain::smooth_level_set(int dim,
                                            std::function<double(const Vec&)> phi,
                                            std::function<Vec(const Vec&)> grad_phi,
                                            Vec interior_hint) {
    if (dim < 1) throw ValidationError("domain dimension must be >= 1");
    if (!phi || !grad_phi) throw ValidationError("smooth domain requires phi and grad phi");
    if (interior_hint.size() != dim) throw ValidationError("interior hint has wrong dimension");
    if (!(phi(interior_hint) < 0.0)) {
        throw ValidationError("smooth domain validation failed: phi(interior hint) must be < 0");
    }
    ConvexDomain d;
    d.kind_ = DomainKind::SmoothLevelSet;
    d.dim_ = dim;
    d.phi_ = std::move(phi);
    d.grad_phi_ = std::move(grad_phi);
    d.interior_point_ = std::move(interior_hint);
    return d;
}

ConvexDomain ConvexDomain::ball(Vec center, double radius) {
    if (radius <= 0.0) throw ValidationError("ball radius must be positive");
    const int dim = static_cast<int>(center.size());
    Vec c = center;
    auto phi = [c, radius](const Vec& y) { return (y - c).norm() - radius; };
    auto grad = [c](const Vec& y) {
        Vec g = y - c;
        const double n = g.norm();
        if (n < kEps) return Vec(Vec::Zero(g.size()));
        return Vec(g / n);
    };
    return smooth_level_set(dim, phi, grad, std::move(center));
}

// Strictly interior point by over-relaxed projections onto the most
// violated / least satisfied half-space. A constructive point is available
// for switching polytopes, but this generic search also covers them.
void ConvexDomain::find_interior_point() {
    if (halfspaces_.empty()) {
        interior_point_ = Vec::Zero(dim_);
        return;
    }
    double scale = 1.0;
    for (const auto& h : halfspaces_) scale = std::max(scale, std::abs(h.b));

    Vec y = Vec::Zero(dim_);
    double push = 0.5 * scale;
    const double ok_margin = 1e-7 * scale;
    int stale = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 20000; ++iter) {
        double m = std::numeric_limits<double>::infinity();
        std::size_t imin = 0;
        for (std::size_t i = 0; i < halfspaces_.size(); ++i) {
            const double mi = halfspaces_[i].a.dot(y) - halfspaces_[i].b;
            if (mi < m) { m = mi; imin = i; }
        }
        if (m > ok_margin) {
            interior_point_ = y;
            return;
        }
        if (m > best + 1e-14 * scale) {
            best = m;
            stale = 0;
        } else if (++stale > 200) {
            push *= 0.5;
            stale = 0;
            if (push < 1e-12 * scale) break;
        }
        y += (push - m) * halfspaces_[imin].a;
    }
    throw ValidationError("domain validation failed: no strictly interior point found "
                          "(empty or degenerate half-space intersection)");
}

Region ConvexDomain::contains(const Vec& y, double tol) const {
    check_dim(y);
    if (kind_ == DomainKind::SmoothLevelSet) {
        const double v = phi_(y);
        if (v < -tol) return Region::Interior;
        if (v <= tol) return Region::Boundary;
        return Region::Exterior;
    }
    double m = std::numeric_limits<double>::infinity();
    for (const auto& h : halfspaces_) m = std::min(m, h.a.dot(y) - h.b);
    if (m > tol) return Region::Interior;
    if (m >= 0.0) return Region::Boundary; // inside: distance to the boundary equals the margin
    const double d = distance(y);
    return d <= tol ? Region::Boundary : Region::Exterior;
}

std::pair<Vec, double> ConvexDomain::project(const Vec& y) const {
    check_dim(y);
    if (kind_ == DomainKind::SmoothLevelSet) return project_smooth(y);
    if (dim_ <= 6) return project_polyhedral(y);
    return project_polyhedral_dykstra(y);
}

namespace {

// Equality-constrained projection of y onto {a_i.x = b_i, i in subset}.
// Returns false when the subset is rank deficient. On success gives the
// projected point and the multipliers (x - y = sum mu_i a_i).
bool equality_projection(const Vec& y, const std::vector<Halfspace>& hs,
                         const std::vector<std::size_t>& subset, Vec& x, Vec& mu) {
    const Eigen::Index k = static_cast<Eigen::Index>(subset.size());
    Mat A(k, y.size());
    Vec r(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        A.row(i) = hs[subset[static_cast<std::size_t>(i)]].a.transpose();
        r[i] = hs[subset[static_cast<std::size_t>(i)]].b - hs[subset[static_cast<std::size_t>(i)]].a.dot(y);
    }
    Mat gram = A * A.transpose();
    Eigen::FullPivLU<Mat> lu(gram);
    lu.setThreshold(1e-10);
    if (lu.rank() < k) return false;
    mu = lu.solve(r);
    x = y + A.transpose() * mu;
    return true;
}

bool feasible(const Vec& x, const std::vector<Halfspace>& hs, double tol) {
    for (const auto& h : hs) {
        if (h.a.dot(x) - h.b < -tol) return false;
    }
    return true;
}

} // namespace

// Exact projection for d <= 6: KKT-verified fast paths, then exhaustive
// enumeration over active-constraint subsets.
std::pair<Vec, double> ConvexDomain::project_polyhedral(const Vec& y) const {
    const double scale = 1.0 + y.norm();
    const double ftol = 1e-11 * scale;

    std::vector<std::size_t> violated;
    for (std::size_t i = 0; i < halfspaces_.size(); ++i) {
        if (halfspaces_[i].a.dot(y) - halfspaces_[i].b < 0.0) violated.push_back(i);
    }
    if (violated.empty()) return {y, 0.0};

    Vec x, mu;
    // Fast path: all violated constraints active at once.
    if (violated.size() <= static_cast<std::size_t>(dim_) &&
        equality_projection(y, halfspaces_, violated, x, mu) &&
        mu.minCoeff() >= -ftol && feasible(x, halfspaces_, ftol)) {
        return {x, (y - x).norm()};
    }

    // Exhaustive enumeration over subsets of size 1..dim.
    const std::size_t m = halfspaces_.size();
    double best_dist = std::numeric_limits<double>::infinity();
    Vec best_x;
    std::vector<std::size_t> subset;
    auto consider = [&](const std::vector<std::size_t>& s) {
        Vec xx, mm;
        if (!equality_projection(y, halfspaces_, s, xx, mm)) return;
        if (mm.minCoeff() < -ftol) return;
        if (!feasible(xx, halfspaces_, ftol)) return;
        const double dist = (y - xx).norm();
        if (dist < best_dist) {
            best_dist = dist;
            best_x = xx;
        }
    };
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t remaining) {
        if (!subset.empty()) consider(subset);
        if (remaining == 0) return;
        for (std::size_t i = start; i < m; ++i) {
            subset.push_back(i);
            rec(i + 1, remaining - 1);
            subset.pop_back();
        }
    };
    rec(0, static_cast<std::size_t>(dim_));
    if (!std::isfinite(best_dist)) {
        throw NumericalError("projection failed: no KKT point among constraint subsets (malformed domain?)");
    }
    return {best_x, best_dist};
}

std::pair<Vec, double> ConvexDomain::project_polyhedral_dykstra(const Vec& y) const {
    const double scale = 1.0 + y.norm();
    Vec x = y;
    std::vector<Vec> corr(halfspaces_.size(), Vec::Zero(dim_));
    for (int iter = 0; iter < 10000; ++iter) {
        double shift = 0.0;
        for (std::size_t i = 0; i < halfspaces_.size(); ++i) {
            Vec z = x + corr[i];
            const double m = halfspaces_[i].a.dot(z) - halfspaces_[i].b;
            Vec xn = m >= 0.0 ? z : Vec(z - m * halfspaces_[i].a);
            corr[i] = z - xn;
            shift += (xn - x).norm();
            x = xn;
        }
        if (shift < 1e-13 * scale) {
            return {x, (y - x).norm()};
        }
    }
    throw NumericalError("projection failed: Dykstra iteration cap exceeded (malformed domain?)");
}

std::pair<Vec, double> ConvexDomain::project_smooth(const Vec& y) const {
    if (phi_(y) <= 0.0) return {y, 0.0};
    const double scale = 1.0 + y.norm();
    const double land_tol = 1e-13 * scale;

    auto land_on_boundary = [&](Vec x) -> Vec {
        for (int inner = 0; inner < 80; ++inner) {
            const double v = phi_(x);
            if (std::abs(v) <= land_tol) return x;
            Vec g = grad_phi_(x);
            const double gn2 = g.squaredNorm();
            if (gn2 < kEps) break;
            x -= (v / gn2) * g;
        }
        // Bisection fallback along the segment to the interior point.
        Vec lo = interior_point_, hi = x;
        if (phi_(hi) < 0.0) return hi;
        for (int it = 0; it < 200; ++it) {
            Vec mid = 0.5 * (lo + hi);
            if (phi_(mid) < 0.0) lo = mid; else hi = mid;
            if ((hi - lo).norm() < land_tol) break;
        }
        return hi;
    };

    Vec x = land_on_boundary(y);
    for (int outer = 0; outer < 200; ++outer) {
        Vec g = grad_phi_(x);
        const double gn = g.norm();
        if (gn < kEps) throw NumericalError("smooth projection failed: vanishing gradient on the boundary");
        Vec nhat = g / gn;
        Vec r = (y - x) - (y - x).dot(nhat) * nhat;
        if (r.norm() <= 1e-12 * scale) {
            return {x, (y - x).norm()};
        }
        x = land_on_boundary(x + 0.8 * r);
    }
    throw NumericalError("smooth projection failed: KKT iteration cap exceeded");
}

NormalConeSample ConvexDomain::normal_cone(const Vec& y, double tol) const {
    const Region region = contains(y, tol);
    if (region == Region::Exterior) {
        throw ValidationError("normal cone queried at a point exterior to the domain beyond tolerance");
    }
    NormalConeSample cone;
    cone.base_point = y;
    if (region == Region::Interior) return cone;

    if (kind_ == DomainKind::SmoothLevelSet) {
        Vec g = grad_phi_(y);
        const double gn = g.norm();
        if (gn >= kEps) cone.generators.push_back(g / gn);
        return cone;
    }
    for (const auto& h : halfspaces_) {
        if (std::abs(h.a.dot(y) - h.b) <= tol) {
            cone.generators.push_back(-h.a);
        }
    }
    return cone;
}

NormalConeSample ConvexDomain::normal_cone(const Vec& y) const {
    return normal_cone(y, default_tol(y));
}

bool cone_membership(const NormalConeSample& cone, const Vec& u, double tol) {
    const double un = u.norm();
    if (un <= tol) return true;
    if (cone.generators.empty()) return false;
    Mat G(u.size(), static_cast<Eigen::Index>(cone.generators.size()));
    for (Eigen::Index j = 0; j < G.cols(); ++j) {
        G.col(j) = cone.generators[static_cast<std::size_t>(j)];
    }
    return nnls_residual(G, u / un) <= tol;
}

} // namespace orbsde::geometry
