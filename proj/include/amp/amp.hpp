#pragma once

// Approximate message passing for the LASSO, the iterative soft thresholding
// baseline, and the stationarity certificate that links AMP fixed points to
// LASSO minimisers.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amp/error.hpp"
#include "amp/gaussian.hpp"
#include "amp/instance.hpp"
#include "amp/scalar_risk.hpp"

namespace amp {

enum class TauEstimator { Rms, Median };

/// theta_t = alpha * tau_hat_t, or an explicit theta sequence (the last value repeats).
struct ThresholdPolicy {
    double alpha = 1.0;
    TauEstimator estimator = TauEstimator::Rms;
    std::vector<double> fixed_thetas;

    static ThresholdPolicy rms(double alpha) { return {alpha, TauEstimator::Rms, {}}; }
    static ThresholdPolicy median(double alpha) { return {alpha, TauEstimator::Median, {}}; }
    static ThresholdPolicy fixed_sequence(std::vector<double> thetas) {
        ThresholdPolicy p{1.0, TauEstimator::Rms, std::move(thetas)};
        p.validate();
        return p;
    }

    bool is_fixed() const { return !fixed_thetas.empty(); }

    void validate() const {
        require(alpha > 0.0, "ThresholdPolicy: alpha must be positive");
        for (double t : fixed_thetas) require(t >= 0.0 && std::isfinite(t), "ThresholdPolicy: thetas must be >= 0");
    }

    double theta(long t, double tau_hat) const {
        if (!is_fixed()) return alpha * tau_hat;
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(t), fixed_thetas.size() - 1);
        return fixed_thetas[k];
    }
};

/// RMS: sqrt(|r|^2/m). Median: lower-middle order statistic of |r_i| over Phi^{-1}(3/4).
template <typename Derived>
double estimate_tau(const Eigen::MatrixBase<Derived>& r, TauEstimator mode) {
    const auto m = r.size();
    require(m >= 1, "estimate_tau: empty residual");
    if (mode == TauEstimator::Rms) return std::sqrt(static_cast<double>(r.squaredNorm()) / static_cast<double>(m));
    std::vector<double> mags(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) mags[static_cast<std::size_t>(i)] = std::abs(static_cast<double>(r[i]));
    const auto mid = mags.begin() + (m - 1) / 2;
    std::nth_element(mags.begin(), mid, mags.end());
    return *mid / gauss::kMedianAbsNormal;
}

template <typename Derived>
Eigen::Index count_nonzero(const Eigen::MatrixBase<Derived>& v) {
    return (v.array() != typename Derived::Scalar(0)).count();
}

template <typename Scalar>
struct AmpState {
    Vector<Scalar> x;       // x^t
    Vector<Scalar> r;       // most recent residual r^{t-1} (y at t = 0)
    Vector<Scalar> r_prev;  // r^{t-2}
    Vector<Scalar> u;       // un-thresholded estimate x^{t-1} + A^T r^{t-1}
    long t = 0;
    double tau_hat = 0.0;
    double theta = 0.0;
    double b = 0.0;  // |x|_0 / m

    static AmpState initial(const Instance<Scalar>& inst) {
        AmpState s;
        s.x = Vector<Scalar>::Zero(inst.n);
        s.r = inst.y;
        s.r_prev = Vector<Scalar>::Zero(inst.m);
        s.u = Vector<Scalar>::Zero(inst.n);
        return s;
    }
};

namespace detail {

// One sweep shared by AMP and IST. `scale` multiplies A and y (IST rescaling).
template <typename Scalar>
AmpState<Scalar> iterate(const AmpState<Scalar>& s, const Instance<Scalar>& inst, const ThresholdPolicy& policy,
                         bool onsager, Scalar scale) {
    require(s.x.size() == inst.n && s.r.size() == inst.m, "amp_step: state does not match instance");
    const Scalar m = static_cast<Scalar>(inst.m);
    AmpState<Scalar> next;
    const Scalar b = onsager ? static_cast<Scalar>(count_nonzero(s.x)) / m : Scalar(0);
    next.r.noalias() = scale * (inst.y - inst.a * s.x);
    if (onsager && b != Scalar(0)) next.r += b * s.r;
    // Effective noise of u: columns of scale*A have norm ~scale, so the residual
    // estimate is mapped back by one factor of scale (a no-op for AMP).
    next.tau_hat = static_cast<double>(scale) * estimate_tau(next.r, policy.estimator);
    next.theta = policy.theta(s.t, next.tau_hat);
    next.u = s.x;
    next.u.noalias() += scale * (inst.a.transpose() * next.r);
    next.x = soft_threshold(next.u, static_cast<Scalar>(next.theta));
    next.r_prev = s.r;
    next.t = s.t + 1;
    next.b = static_cast<double>(count_nonzero(next.x)) / static_cast<double>(inst.m);

    const double limit = 1e6 * std::max(1.0, static_cast<double>(inst.y.cwiseAbs().maxCoeff()));
    const double xmax = next.x.size() ? static_cast<double>(next.x.cwiseAbs().maxCoeff()) : 0.0;
    if (!std::isfinite(xmax) || xmax > limit)
        throw NumericalError("iteration blew up at t=" + std::to_string(next.t) + " (|x|_inf=" + std::to_string(xmax) +
                             ")");
    return next;
}

} // namespace detail

/// r^t = y - A x^t + b_t r^{t-1}, b_t = |x^t|_0/m; x^{t+1} = eta(x^t + A^T r^t; theta_t).
template <typename Scalar>
AmpState<Scalar> amp_step(const AmpState<Scalar>& state, const Instance<Scalar>& inst, const ThresholdPolicy& policy) {
    return detail::iterate(state, inst, policy, true, Scalar(1));
}

/// Same sweep without the Onsager term; `scale` is applied to both A and y.
template <typename Scalar>
AmpState<Scalar> ist_step(const AmpState<Scalar>& state, const Instance<Scalar>& inst, const ThresholdPolicy& policy,
                          Scalar scale = Scalar(1)) {
    return detail::iterate(state, inst, policy, false, scale);
}

/// Onsager coefficient from the derivative form, sum_i eta'(u_i; theta)/m. Agrees
/// with |eta(u; theta)|_0/m because eta' is 0 at the kink.
template <typename Derived>
double onsager_from_derivative(const Eigen::MatrixBase<Derived>& u, double theta, Eigen::Index m) {
    using Scalar = typename Derived::Scalar;
    return static_cast<double>(soft_threshold_derivative(u, static_cast<Scalar>(theta)).sum()) / static_cast<double>(m);
}

/// Largest singular value by power iteration on A^T A.
template <typename Scalar>
double operator_norm(const Matrix<Scalar>& a, double rel_tol = 1e-6, int max_iter = 100000) {
    Vector<Scalar> v = Vector<Scalar>::Ones(a.cols()) / std::sqrt(static_cast<Scalar>(a.cols()));
    // Deterministic perturbation so v is not orthogonal to the top singular vector by symmetry.
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] *= Scalar(1) + Scalar(0.5) * std::sin(Scalar(j + 1));
    v.normalize();
    double estimate = 0.0;
    Vector<Scalar> av(a.rows());
    for (int it = 0; it < max_iter; ++it) {
        av.noalias() = a * v;
        Vector<Scalar> w = a.transpose() * av;
        const double nw = static_cast<double>(w.norm());
        if (nw == 0.0) return 0.0;
        const double next = std::sqrt(nw);
        v = w / static_cast<Scalar>(nw);
        if (it > 0 && std::abs(next - estimate) <= rel_tol * next) return next;
        estimate = next;
    }
    return estimate;
}

template <typename Scalar>
double lasso_objective(const Instance<Scalar>& inst, const Vector<Scalar>& x, double lambda) {
    return 0.5 * static_cast<double>((inst.y - inst.a * x).squaredNorm()) +
           lambda * static_cast<double>(x.template lpNorm<1>());
}

/// Stationarity violation of 1/2|y - Ax|^2 + lambda |x|_1 at x; zero iff x is a minimiser.
template <typename Scalar>
double lasso_kkt_gap(const Instance<Scalar>& inst, const Vector<Scalar>& x, double lambda) {
    require(lambda > 0.0, "lasso_kkt_gap: lambda must be positive");
    require(x.size() == inst.n, "lasso_kkt_gap: x has wrong length");
    const Vector<Scalar> g = inst.a.transpose() * (inst.y - inst.a * x);
    double gap = 0.0;
    for (Eigen::Index i = 0; i < inst.n; ++i) {
        const double gi = static_cast<double>(g[i]);
        if (x[i] == Scalar(0))
            gap = std::max(gap, std::abs(gi) - lambda);
        else
            gap = std::max(gap, std::abs(gi - lambda * (x[i] > Scalar(0) ? 1.0 : -1.0)));
    }
    return std::max(gap, 0.0);
}

/// lambda = theta* (1 - |x_hat|_0 / m).
template <typename Derived>
double effective_lambda(const Eigen::MatrixBase<Derived>& x_hat, double theta_star, Eigen::Index m) {
    require(theta_star >= 0.0, "effective_lambda: theta must be nonnegative");
    require(m >= 1, "effective_lambda: m must be positive");
    const auto nnz = count_nonzero(x_hat);
    if (nnz >= m) throw SpecError("effective_lambda: |x|_0 >= m makes the calibration degenerate");
    return theta_star * (1.0 - static_cast<double>(nnz) / static_cast<double>(m));
}

struct TrajectoryRow {
    long t = 0;
    double tau_hat = 0.0;
    double theta = 0.0;
    double b = 0.0;
    std::optional<double> mse;
    std::optional<double> kkt_gap;
};

template <typename Scalar>
struct SolverResult {
    Vector<Scalar> x_hat;
    Vector<Scalar> r_hat;
    std::vector<TrajectoryRow> trajectory;
    AmpState<Scalar> final_state;
    bool converged = false;
    long iterations = 0;
    double scale = 1.0;  // IST rescaling factor applied to A and y
    bool onsager = true;

    // LASSO regularisation certified by a fixed point: theta (1 - b) for AMP,
    // theta / c^2 for IST on the rescaled problem.
    double lambda_effective() const {
        if (!onsager) return final_state.theta / (scale * scale);
        return effective_lambda(x_hat, final_state.theta, static_cast<Eigen::Index>(r_hat.size()));
    }
};

struct RunOptions {
    long max_iter = 1000;
    double tol = 1e-8;
    bool track_mse = true;   // needs ground truth x0
    bool track_kkt = false;  // costs one extra pair of products per iteration
};

namespace detail {

template <typename Scalar, typename Step>
SolverResult<Scalar> run_loop(const Instance<Scalar>& inst, const RunOptions& opts, bool onsager, double scale,
                              Step&& step) {
    require(opts.max_iter >= 1, "run: max_iter must be >= 1");
    require(opts.tol > 0.0, "run: tol must be positive");
    SolverResult<Scalar> res;
    res.scale = scale;
    res.onsager = onsager;
    AmpState<Scalar> s = AmpState<Scalar>::initial(inst);
    const double n = static_cast<double>(inst.n);
    if (opts.track_mse) {
        TrajectoryRow row;
        row.mse = static_cast<double>((s.x - inst.x0).squaredNorm()) / n;
        res.trajectory.push_back(row);
    }
    for (long it = 0; it < opts.max_iter; ++it) {
        AmpState<Scalar> next = step(s);
        const double change = static_cast<double>((next.x - s.x).norm());
        const double ref = std::max(1.0, static_cast<double>(s.x.norm()));
        TrajectoryRow row;
        row.t = next.t;
        row.tau_hat = next.tau_hat;
        row.theta = next.theta;
        row.b = next.b;
        if (opts.track_mse) row.mse = static_cast<double>((next.x - inst.x0).squaredNorm()) / n;
        if (opts.track_kkt) {
            const double lam = onsager ? next.theta * (1.0 - next.b) : next.theta / (scale * scale);
            if (lam > 0.0) row.kkt_gap = lasso_kkt_gap(inst, next.x, lam);
        }
        res.trajectory.push_back(row);
        s = std::move(next);
        res.iterations = s.t;
        if (change / ref < opts.tol) {
            res.converged = true;
            break;
        }
    }
    res.x_hat = s.x;
    res.r_hat = s.r;
    res.final_state = std::move(s);
    return res;
}

} // namespace detail

/// Runs AMP from x = 0 until the relative change of x drops below tol or max_iter.
template <typename Scalar>
SolverResult<Scalar> amp_run(const Instance<Scalar>& inst, const ThresholdPolicy& policy, const RunOptions& opts) {
    policy.validate();
    return detail::run_loop(inst, opts, true, 1.0, [&](const AmpState<Scalar>& s) { return amp_step(s, inst, policy); });
}

/// IST on (cA, cy) with c chosen so that |cA|_2 = rescale_opnorm. The LASSO it
/// targets has lambda = theta (in scaled units) / c^2.
template <typename Scalar>
SolverResult<Scalar> ist_run(const Instance<Scalar>& inst, const ThresholdPolicy& policy, const RunOptions& opts,
                             double rescale_opnorm) {
    policy.validate();
    require(rescale_opnorm > 0.0 && rescale_opnorm <= 1.0, "ist_run: rescale_opnorm must lie in (0,1]");
    const double c = rescale_opnorm / operator_norm(inst.a);
    return detail::run_loop(inst, opts, false, c,
                            [&](const AmpState<Scalar>& s) { return ist_step(s, inst, policy, static_cast<Scalar>(c)); });
}

} // namespace amp
