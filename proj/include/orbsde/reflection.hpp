#pragma once

#include "orbsde/geometry.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <utility>
#include <vector>

namespace orbsde::reflection {

enum class Continuity { Smooth, Continuous, Discontinuous };

/// The oblique reflection matrix field H(t, x, y, z) together with its
/// declared bound and obliqueness constant. Discontinuous fields declare
/// their discontinuity set so validators can skip it.
class ReflectionField {
public:
    using EvalFn = std::function<Mat(double t, const Vec& x, const Vec& y, const Mat& z)>;
    using DiscontinuityFn = std::function<bool(double t, const Vec& x, const Vec& y)>;

    ReflectionField(int ydim, EvalFn evaluate, double bound_L, double obliqueness_eta,
                    Continuity continuity, DiscontinuityFn near_discontinuity = {});

    Mat evaluate(double t, const Vec& x, const Vec& y, const Mat& z) const;
    int ydim() const { return ydim_; }
    double bound_L() const { return bound_L_; }
    double obliqueness_eta() const { return obliqueness_eta_; }
    Continuity continuity() const { return continuity_; }
    bool near_discontinuity(double t, const Vec& x, const Vec& y) const;

    static ReflectionField identity(int d);
    static ReflectionField constant(Mat h, double obliqueness_eta);
    /// Interpolated projector field of the switching problem (see SwitchingH).
    static ReflectionField switching(const Mat& costs);
    /// Discontinuous field on the wedge {y1 >= 0, y1 + y2 >= 0} in R^3:
    /// identity on the facet {y1 = 0} and on the corner line, and a constant
    /// oblique matrix sending the outer facet normal to the y1 axis elsewhere.
    /// Off the boundary the field is extended through the projection.
    static ReflectionField counterexample_wedge();

private:
    int ydim_;
    EvalFn evaluate_;
    double bound_L_;
    double obliqueness_eta_;
    Continuity continuity_;
    DiscontinuityFn near_discontinuity_;
};

/// Reflection matrix of the switching problem, built from the cost matrix.
///
/// The closed switching domain is invariant along (1,...,1); its slice at
/// {y^d = 0} is a compact polytope in R^{d-1}. Each extremal point of the
/// slice carries the orthogonal projector onto the span of the unit vectors
/// e^l picked out by its active facets C^{lj}; values on the rest of the
/// polytope are barycentric combinations of vertex projectors over a
/// deterministic triangulation (pulling triangulation anchored at the
/// lexicographically smallest vertex of each face). Evaluation at a general
/// point shifts along (1,...,1) into the slice and clips to the polytope by
/// projection before interpolating.
class SwitchingH {
public:
    explicit SwitchingH(const Mat& costs);

    int dim() const { return dim_; }
    const Mat& costs() const { return costs_; }

    /// Evaluate at y in R^d (shift, clip, interpolate).
    Mat evaluate(const Vec& y) const;
    /// Evaluate at a point of the slice polytope in R^{d-1}.
    Mat evaluate_slice(const Vec& u) const;

    struct VertexEntry {
        Vec point;                                    // in R^{d-1}
        std::vector<std::pair<int, int>> active_pairs; // ordered pairs (l, j)
        Mat projector;                                 // d x d
    };
    const std::vector<VertexEntry>& vertices() const { return vertices_; }
    const geometry::ConvexDomain& slice_polytope() const { return *slice_domain_; }

    int constraint_count() const { return static_cast<int>(pairs_.size()); }
    std::pair<int, int> pair_of_constraint(int c) const { return pairs_[static_cast<std::size_t>(c)]; }
    /// Indices of vertices lying on constraint c.
    std::vector<int> facet_vertices(int c) const;

    /// Barycentric weights of a slice point over the vertex table
    /// (nonnegative, sum to one, supported on the smallest containing face).
    std::map<int, double> barycentric_weights(const Vec& u) const;
    /// Same, but forcing the walk to start on the face defined by
    /// `seed_active`; the point must lie on that face. Exposed so that
    /// agreement across faces meeting at a shared point can be verified.
    std::map<int, double> barycentric_weights_on_face(const std::vector<int>& seed_active,
                                                      const Vec& u) const;

private:
    std::map<int, double> walk(std::uint64_t active_mask, const Vec& point) const;
    std::uint64_t active_mask_at(const Vec& u, double tol) const;
    double margin(int c, const Vec& u) const;

    int dim_ = 0;                 // d
    Mat costs_;
    std::vector<std::pair<int, int>> pairs_;  // constraint index -> (l, j)
    std::vector<Vec> normals_;                // slice-space constraint normals (unnormalized)
    std::vector<double> offsets_;             // a.u >= b
    std::vector<VertexEntry> vertices_;
    std::vector<std::uint64_t> vertex_active_;
    std::shared_ptr<geometry::ConvexDomain> slice_domain_;
};

/// Spec-facing constructor name.
SwitchingH build_switching_h(const Mat& costs);

struct ObliquenessViolation {
    Vec boundary_point;
    Vec upsilon;
    double value = 0.0;
};

struct ObliquenessReport {
    double eta_hat = 0.0;
    std::vector<ObliquenessViolation> violations;
    int samples_used = 0;
};

/// Samples boundary points and normal directions, returns the minimum
/// sampled H upsilon . upsilon and the points falling below the declared
/// obliqueness constant. Declared discontinuity sets are skipped.
ObliquenessReport validate_obliqueness(const ReflectionField& field,
                                       const geometry::ConvexDomain& domain,
                                       int sample_count, std::uint64_t seed = 20240901ULL);

/// Approximate membership of psi in the limiting reflection cone at
/// (t, x, y, z): the closed positive span of H(t, x, y~, z~) u over
/// (y~, z~) in the eps-ball and u in the outward normal cone at P(y).
/// For y interior the cone is {0}, so membership reduces to |psi| <= tol.
bool limiting_cone_membership(const ReflectionField& field, const geometry::ConvexDomain& domain,
                              double t, const Vec& x, const Vec& y, const Mat& z,
                              const Vec& psi, double eps, double tol,
                              std::uint64_t seed = 77003ULL);

} // namespace orbsde::reflection
