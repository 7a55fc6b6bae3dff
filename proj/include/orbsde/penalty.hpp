#pragma once

#include "orbsde/geometry.hpp"

#include <limits>

namespace orbsde::penalty {

/// Penalization parameters: strength n and Huber truncation radius M.
/// n = 0 disables the penalty; M = infinity selects the pure quadratic
/// penalty (experimental option, the analysis uses the truncated form).
struct PenaltyParams {
    double n = 0.0;
    double M = std::numeric_limits<double>::infinity();

    PenaltyParams() = default;
    PenaltyParams(double n_, double M_);
};

/// Huber function: |h|^2/2 for |h| <= M, M|h| - M^2/2 beyond.
double theta(double M, const Vec& h);
double theta_of_norm(double M, double r);

/// phi(y) = n * inf_{x in D} theta_M(y - x); closed form in the distance:
/// 0 on the closure, n d^2/2 for 0 < d <= M, n M d - n M^2/2 for d > M.
double phi(const PenaltyParams& params, const geometry::ConvexDomain& domain, const Vec& y);

/// Gradient of phi: 0 on the closure, n d u for d <= M, n M u beyond,
/// where u is the unit vector from the projection to y. Magnitude is
/// capped at n M and continuous through the boundary seam.
Vec grad_phi(const PenaltyParams& params, const geometry::ConvexDomain& domain, const Vec& y);

} // namespace orbsde::penalty
