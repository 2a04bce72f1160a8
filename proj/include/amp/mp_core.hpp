#pragma once

// Per-edge message passing on the dense factor graph of the LASSO: the
// quadratic (second-order) reduction of min-sum, and its further reduction
// to scalar messages r_{a->i}, x_{i->a}. Memory and work are Theta(mn); this
// is a desk-scale oracle for AMP, not a production solver.

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "amp/error.hpp"
#include "amp/instance.hpp"
#include "amp/scalar_risk.hpp"

namespace amp {

template <typename Scalar>
using EdgeArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Entry (a, i) holds the message on edge a--i in each direction.
template <typename Scalar>
struct EdgeMessages {
    EdgeArray<Scalar> x_var_to_fac;
    EdgeArray<Scalar> gamma_var_to_fac;
    EdgeArray<Scalar> alpha_fac_to_var;
    EdgeArray<Scalar> beta_fac_to_var;

    static EdgeMessages zeros(Eigen::Index m, Eigen::Index n) {
        return {EdgeArray<Scalar>::Zero(m, n), EdgeArray<Scalar>::Zero(m, n), EdgeArray<Scalar>::Zero(m, n),
                EdgeArray<Scalar>::Ones(m, n)};
    }

    Eigen::Index rows() const { return x_var_to_fac.rows(); }
    Eigen::Index cols() const { return x_var_to_fac.cols(); }
};

namespace detail {

// Cavity sums over the row: sum_{j != i} v(a, j) as an m x n array.
template <typename Scalar>
EdgeArray<Scalar> row_cavity(const EdgeArray<Scalar>& v) {
    return v.rowwise().sum().replicate(1, v.cols()) - v;
}

// Cavity sums over the column: sum_{b != a} v(b, i).
template <typename Scalar>
EdgeArray<Scalar> col_cavity(const EdgeArray<Scalar>& v) {
    return v.colwise().sum().replicate(v.rows(), 1) - v;
}

} // namespace detail

/// One synchronous update. Factor messages (alpha, beta) at time t are computed
/// from the incoming (x, gamma); the variable messages then move to t + 1.
template <typename Scalar>
EdgeMessages<Scalar> quad_mp_step(const EdgeMessages<Scalar>& msgs, const Instance<Scalar>& inst, double lambda) {
    require(lambda > 0.0, "quad_mp_step: lambda must be positive");
    require(msgs.rows() == inst.m && msgs.cols() == inst.n, "quad_mp_step: message shape does not match instance");
    require((msgs.gamma_var_to_fac >= Scalar(0)).all(), "quad_mp_step: gamma messages must be nonnegative");
    const auto a = inst.a.array();
    const EdgeArray<Scalar> a2 = a.square();

    EdgeMessages<Scalar> out;
    const EdgeArray<Scalar> denom = Scalar(1) + detail::row_cavity<Scalar>(a2 * msgs.gamma_var_to_fac);
    if ((denom <= Scalar(0)).any()) throw NumericalError("quad_mp_step: nonpositive beta denominator");
    const EdgeArray<Scalar> partial = detail::row_cavity<Scalar>(a * msgs.x_var_to_fac);
    out.beta_fac_to_var = denom.inverse();
    out.alpha_fac_to_var = (inst.y.array().replicate(1, inst.n) - partial) * out.beta_fac_to_var;

    const EdgeArray<Scalar> num = detail::col_cavity<Scalar>(a * out.alpha_fac_to_var);
    const EdgeArray<Scalar> curv = detail::col_cavity<Scalar>(a2 * out.beta_fac_to_var);
    out.x_var_to_fac.resize(inst.m, inst.n);
    out.gamma_var_to_fac.resize(inst.m, inst.n);
    const auto lam = static_cast<Scalar>(lambda);
    for (Eigen::Index i = 0; i < inst.n; ++i)
        for (Eigen::Index b = 0; b < inst.m; ++b) {
            const Scalar c = curv(b, i);
            if (c <= Scalar(0)) {
                // No other factor touches variable i: the cavity cost is lambda |x|.
                out.x_var_to_fac(b, i) = Scalar(0);
                out.gamma_var_to_fac(b, i) = Scalar(0);
                continue;
            }
            const Scalar s1 = num(b, i) / c;
            const Scalar s2 = lam / c;
            out.x_var_to_fac(b, i) = soft_threshold(s1, s2);
            // Curvature of the cavity cost at its minimum is c, so gamma = eta'/c.
            // With gamma = eta' alone, support-consistent fixed points miss the KKT conditions.
            out.gamma_var_to_fac(b, i) = soft_threshold_derivative(s1, s2) / c;
        }
    return out;
}

/// Per-variable decision from all incoming factor messages (no cavity).
template <typename Scalar>
Vector<Scalar> mp_estimate(const EdgeMessages<Scalar>& msgs, const Instance<Scalar>& inst, double lambda) {
    const auto a = inst.a.array();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> num = (a * msgs.alpha_fac_to_var).colwise().sum();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> curv = (a.square() * msgs.beta_fac_to_var).colwise().sum();
    Vector<Scalar> x(inst.n);
    for (Eigen::Index i = 0; i < inst.n; ++i)
        x[i] = curv[i] > Scalar(0) ? soft_threshold(num[i] / curv[i], static_cast<Scalar>(lambda) / curv[i]) : Scalar(0);
    return x;
}

template <typename Scalar>
struct ReducedMessages {
    EdgeArray<Scalar> r_fac_to_var;  // r_{a->i}
    EdgeArray<Scalar> x_var_to_fac;  // x_{i->a}
};

/// r_{a->i} = y_a - sum_{j != i} A_aj x_{j->a};  x_{i->a} = eta(sum_{b != a} A_bi r_{b->i}; theta).
template <typename Scalar>
ReducedMessages<Scalar> reduced_mp_step(const EdgeArray<Scalar>& x_msgs, const Instance<Scalar>& inst, double theta) {
    require(theta >= 0.0, "reduced_mp_step: theta must be nonnegative");
    require(x_msgs.rows() == inst.m && x_msgs.cols() == inst.n, "reduced_mp_step: message shape does not match instance");
    const auto a = inst.a.array();
    ReducedMessages<Scalar> out;
    out.r_fac_to_var = inst.y.array().replicate(1, inst.n) - detail::row_cavity<Scalar>(a * x_msgs);
    const EdgeArray<Scalar> field = detail::col_cavity<Scalar>(a * out.r_fac_to_var);
    const auto th = static_cast<Scalar>(theta);
    out.x_var_to_fac = field.unaryExpr([th](Scalar v) { return soft_threshold(v, th); });
    return out;
}

/// eta(sum_b A_bi r_{b->i}; theta) for every variable.
template <typename Scalar>
Vector<Scalar> reduced_mp_estimate(const EdgeArray<Scalar>& r_msgs, const Instance<Scalar>& inst, double theta) {
    const Vector<Scalar> field = (inst.a.array() * r_msgs).colwise().sum().transpose();
    return soft_threshold(field, static_cast<Scalar>(theta));
}

/// Runs reduced message passing from zero messages with an externally supplied
/// threshold sequence; returns the per-variable estimate after each step.
template <typename Scalar>
std::vector<Vector<Scalar>> reduced_mp_run(const Instance<Scalar>& inst, const std::vector<double>& thetas) {
    EdgeArray<Scalar> x_msgs = EdgeArray<Scalar>::Zero(inst.m, inst.n);
    std::vector<Vector<Scalar>> estimates;
    estimates.reserve(thetas.size());
    for (double theta : thetas) {
        ReducedMessages<Scalar> next = reduced_mp_step(x_msgs, inst, theta);
        estimates.push_back(reduced_mp_estimate(next.r_fac_to_var, inst, theta));
        x_msgs = std::move(next.x_var_to_fac);
    }
    return estimates;
}

template <typename Scalar>
EdgeMessages<Scalar> quad_mp_run(const Instance<Scalar>& inst, double lambda, int iterations) {
    EdgeMessages<Scalar> msgs = EdgeMessages<Scalar>::zeros(inst.m, inst.n);
    for (int t = 0; t < iterations; ++t) msgs = quad_mp_step(msgs, inst, lambda);
    return msgs;
}

} // namespace amp
