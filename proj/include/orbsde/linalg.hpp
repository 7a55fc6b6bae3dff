#pragma once

#include <Eigen/Dense>

namespace orbsde {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Solve min_{lambda >= 0} |G lambda - u|_2 (Lawson-Hanson active set).
/// Returns the residual norm; `lambda` receives the minimizer.
/// Intended for the small systems arising from normal-cone membership
/// tests (a handful of generators).
double nnls(const Mat& G, const Vec& u, Vec& lambda, int max_iter = 200);

/// Residual norm only.
double nnls_residual(const Mat& G, const Vec& u);

} // namespace orbsde
