#pragma once

#include "orbsde/linalg.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace orbsde::geometry {

/// Classification of a point relative to an open convex domain.
enum class Region { Interior, Boundary, Exterior };

/// One half-space constraint a.y > b. The normal `a` is stored unit-length.
struct Halfspace {
    Vec a;
    double b = 0.0;
};

enum class DomainKind { HalfspaceIntersection, SmoothLevelSet, SwitchingPolytope };

/// Scale-invariant default classification tolerance.
inline double default_tol(const Vec& y) { return 1e-8 * (1.0 + y.norm()); }

/// An open convex domain with projection, distance and normal-cone services.
///
/// Three representations are supported:
///   - intersections of open half-spaces a_i.y > b_i (possibly none, i.e. R^d),
///   - the switching polytope {y : y^l > max_j (y^j - c^{lj})} for a cost
///     matrix c (a half-space intersection with the costs kept for
///     structure checks and the reflection-matrix construction),
///   - smooth level sets {phi < 0} with user-supplied phi and grad phi.
///
/// Construction validates convexity prerequisites and locates a strictly
/// interior point; an empty or degenerate description throws ValidationError.
class ConvexDomain {
public:
    static ConvexDomain halfspace_intersection(int dim, std::vector<Halfspace> halfspaces);
    static ConvexDomain whole_space(int dim);
    /// Requires c_ii = 0 and c^{ij} + c^{jl} - c^{il} > 0 for i != j, j != l.
    static ConvexDomain switching_polytope(const Mat& costs);
    /// `interior_hint` must satisfy phi(hint) < 0; it seeds the validation.
    static ConvexDomain smooth_level_set(int dim,
                                         std::function<double(const Vec&)> phi,
                                         std::function<Vec(const Vec&)> grad_phi,
                                         Vec interior_hint);
    /// Euclidean ball, a convenience smooth domain with level set |y-c|-r.
    static ConvexDomain ball(Vec center, double radius);

    int dim() const { return dim_; }
    DomainKind kind() const { return kind_; }
    const std::vector<Halfspace>& halfspaces() const { return halfspaces_; }
    const Mat& switching_costs() const { return costs_; }
    const Vec& interior_point() const { return interior_point_; }

    Region contains(const Vec& y, double tol) const;
    Region contains(const Vec& y) const { return contains(y, default_tol(y)); }

    /// Euclidean projection onto the closure. Returns (p, |y-p|).
    std::pair<Vec, double> project(const Vec& y) const;
    double distance(const Vec& y) const { return project(y).second; }

    /// Outward unit normals of the constraints active at y (within tol).
    /// y must classify Interior or Boundary; Interior yields no generators.
    struct NormalConeSample normal_cone(const Vec& y, double tol) const;
    NormalConeSample normal_cone(const Vec& y) const;

private:
    ConvexDomain() = default;
    void check_dim(const Vec& y) const;
    std::pair<Vec, double> project_polyhedral(const Vec& y) const;
    std::pair<Vec, double> project_polyhedral_dykstra(const Vec& y) const;
    std::pair<Vec, double> project_smooth(const Vec& y) const;
    void find_interior_point();

    DomainKind kind_ = DomainKind::HalfspaceIntersection;
    int dim_ = 0;
    std::vector<Halfspace> halfspaces_;
    Mat costs_; // switching polytope only
    std::function<double(const Vec&)> phi_;
    std::function<Vec(const Vec&)> grad_phi_;
    Vec interior_point_;
};

/// A sample of the outward normal cone at a boundary point: the active
/// outward unit normals. Every cone member is a nonnegative combination of
/// the generators; the interior cone is {0} (no generators).
struct NormalConeSample {
    Vec base_point;
    std::vector<Vec> generators;
};

/// True iff u lies within tol, in direction, of the closed positive span of
/// the cone generators. u = 0 is always a member.
bool cone_membership(const NormalConeSample& cone, const Vec& u, double tol);

/// Strict structure condition on switching costs:
/// c_ii = 0 and c^{ij} + c^{jl} - c^{il} > 0 for i != j, j != l.
/// Throws ValidationError naming the offending triple when violated.
void check_switching_structure(const Mat& costs);

} // namespace orbsde::geometry
