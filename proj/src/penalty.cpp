#include "orbsde/penalty.hpp"

#include "orbsde/errors.hpp"

#include <cmath>

namespace orbsde::penalty {

PenaltyParams::PenaltyParams(double n_, double M_) : n(n_), M(M_) {
    if (n < 0.0) throw ValidationError("penalty strength n must be >= 0");
    if (!(M > 0.0)) throw ValidationError("penalty truncation radius M must be > 0");
}

double theta_of_norm(double M, double r) {
    if (r <= M) return 0.5 * r * r;
    return M * r - 0.5 * M * M;
}

double theta(double M, const Vec& h) {
    return theta_of_norm(M, h.norm());
}

double phi(const PenaltyParams& params, const geometry::ConvexDomain& domain, const Vec& y) {
    if (params.n == 0.0) return 0.0;
    const double d = domain.distance(y);
    return params.n * theta_of_norm(params.M, d);
}

Vec grad_phi(const PenaltyParams& params, const geometry::ConvexDomain& domain, const Vec& y) {
    if (params.n == 0.0) return Vec::Zero(y.size());
    auto [p, d] = domain.project(y);
    if (d <= 0.0) return Vec::Zero(y.size());
    // n d u is O(d), so returning 0 at the seam d -> 0 keeps the gradient continuous.
    Vec u = (y - p) / d;
    const double magnitude = params.n * std::min(d, params.M);
    return magnitude * u;
}

} // namespace orbsde::penalty
