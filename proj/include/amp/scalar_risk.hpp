#pragma once

#include <cmath>

#include <Eigen/Core>

#include "amp/error.hpp"
#include "amp/prior.hpp"

namespace amp {

/// Soft thresholding eta(y; theta): shrink toward zero by theta, zero on [-theta, theta].
template <typename Scalar>
inline Scalar soft_threshold(Scalar y, Scalar theta) {
    if (y > theta) return y - theta;
    if (y < -theta) return y + theta;
    return Scalar(0);
}

/// Derivative in y. The value at the kink |y| = theta is 0, so the count of
/// ones equals the number of nonzeros of eta(y; theta).
template <typename Scalar>
inline Scalar soft_threshold_derivative(Scalar y, Scalar theta) {
    return std::abs(y) > theta ? Scalar(1) : Scalar(0);
}

/// Componentwise eta over any dense Eigen expression. Returns a lazy expression.
template <typename Derived>
inline auto soft_threshold(const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar theta) {
    using Scalar = typename Derived::Scalar;
    return v.unaryExpr([theta](Scalar y) { return soft_threshold(y, theta); });
}

template <typename Derived>
inline auto soft_threshold_derivative(const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar theta) {
    using Scalar = typename Derived::Scalar;
    return v.unaryExpr([theta](Scalar y) { return soft_threshold_derivative(y, theta); });
}

// Checked variant for user-facing entry points.
inline double soft_threshold_checked(double y, double theta) {
    require(theta >= 0.0, "soft_threshold: theta must be nonnegative");
    return soft_threshold(y, theta);
}

/// Worst-case soft-thresholding risk over the eps-sparse class at threshold alpha*sigma,
/// in units of sigma^2.
double risk_M(double epsilon, double alpha);

struct MinimaxResult {
    double m_sharp;
    double alpha_sharp;
    double epsilon;
};

/// Minimiser of the convex map alpha -> risk_M(eps, alpha), found as the root of its derivative.
MinimaxResult minimax_soft_threshold(double epsilon);

/// Posterior mean E[X0 | X0 + sigma Z = y].
double mmse_estimate(const DiscretePrior& prior, double sigma, double y);

/// E{(E[X0|Y] - X0)^2} by adaptive Gauss-Kronrod over y, per atom.
double mmse_risk(const DiscretePrior& prior, double sigma);

} // namespace amp
