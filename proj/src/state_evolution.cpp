#include "amp/state_evolution.hpp"

#include <cmath>
#include <iostream>

#include "amp/error.hpp"
#include "amp/gaussian.hpp"
#include "amp/scalar_risk.hpp"

namespace amp {

namespace {

// Bisection on a sign change of f over [lo, hi]; f(lo) and f(hi) must differ in sign.
template <typename F>
double bisect(F&& f, double lo, double hi, double abs_tol, int max_iter = 400) {
    double flo = f(lo);
    for (int it = 0; it < max_iter && hi - lo > abs_tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double null_risk_half(double a) { return (1.0 + a * a) * gauss::cdf(-a) - a * gauss::pdf(a); }

} // namespace

double se_map(double tau2, double theta, const ModelParams& params) {
    require(tau2 > 0.0, "se_map: tau2 must be positive");
    params.validate();
    return params.sigma2 + st_mse(params.prior, std::sqrt(tau2), theta) / params.delta;
}

SETrajectory se_run(const ModelParams& params, double alpha, int max_iter, double tol) {
    require(alpha > 0.0, "se_run: alpha must be positive");
    params.validate();
    SETrajectory traj;
    double tau2 = params.sigma2 + second_moment(params.prior) / params.delta;
    traj.tau2_sequence.push_back(tau2);
    if (tau2 == 0.0) {
        traj.converged = true;
        return traj;
    }
    for (int t = 0; t < max_iter; ++t) {
        const double theta = alpha * std::sqrt(tau2);
        const double next = se_map(tau2, theta, params);
        traj.theta_sequence.push_back(theta);
        traj.tau2_sequence.push_back(next);
        const double change = std::abs(next - tau2);
        tau2 = next;
        if (tau2 <= std::numeric_limits<double>::min()) {
            traj.converged = true;
            return traj;
        }
        if (change <= tol * tau2) {
            traj.converged = true;
            traj.tau_star = std::sqrt(tau2);
            return traj;
        }
    }
    return traj;
}

std::vector<double> se_track(const ModelParams& params, const std::vector<double>& thetas) {
    params.validate();
    std::vector<double> out{params.sigma2 + second_moment(params.prior) / params.delta};
    for (double theta : thetas) {
        const double tau2 = out.back();
        out.push_back(tau2 > 0.0 ? se_map(tau2, theta, params) : params.sigma2);
    }
    return out;
}

double alpha_min(double delta) {
    require(delta > 0.0 && delta <= 1.0, "alpha_min: delta must lie in (0,1]");
    if (delta == 1.0) return 0.0;
    // LHS is strictly decreasing from 1/2 at alpha = 0.
    return bisect([delta](double a) { return null_risk_half(a) - delta / 2.0; }, 0.0, 20.0, 1e-13);
}

namespace {

double alpha_floor(double delta) { return delta >= 1.0 ? 0.0 : alpha_min(delta); }

} // namespace

double se_fixed_point(const ModelParams& params, double alpha) {
    params.validate();
    require(params.sigma2 > 0.0, "se_fixed_point: sigma2 must be positive");
    require(alpha > alpha_floor(params.delta), "se_fixed_point: alpha must exceed alpha_min(delta)");
    auto F = [&](double tau2) { return se_map(tau2, alpha * std::sqrt(tau2), params); };
    auto residual_ok = [&](double tau2) { return std::abs(F(tau2) - tau2) <= 1e-12 * tau2; };

    // Damped fixed-point iteration from tau_0^2.
    double s = params.sigma2 + second_moment(params.prior) / params.delta;
    double damping = 1.0;
    double last_step = 0.0;
    for (int it = 0; it < 5000; ++it) {
        const double step = F(s) - s;
        if (std::abs(step) <= 1e-13 * s) break;
        if (it > 0 && (step > 0.0) != (last_step > 0.0)) damping = 0.5;
        s += damping * step;
        last_step = step;
    }
    if (residual_ok(s)) return std::sqrt(s);

    // Bisection on g = F - id: g(sigma2) > 0 and g < 0 for large tau2 by concavity.
    auto g = [&](double tau2) { return F(tau2) - tau2; };
    const double lo = params.sigma2;
    double hi = std::max(2.0 * params.sigma2, params.sigma2 + second_moment(params.prior) / params.delta);
    while (g(hi) >= 0.0) {
        hi *= 2.0;
        if (!std::isfinite(hi) || hi > 1e300) throw NumericalError("se_fixed_point: cannot bracket the fixed point");
    }
    s = bisect(g, lo, hi, 0.0);
    if (!residual_ok(s)) throw NumericalError("se_fixed_point: residual above 1e-12");
    return std::sqrt(s);
}

double calibrate_lambda(double alpha, const ModelParams& params) {
    const double tau = se_fixed_point(params, alpha);
    const double theta = alpha * tau;
    return theta * (1.0 - st_keep_prob(params.prior, tau, theta) / params.delta);
}

double alpha_of_lambda(double lambda, const ModelParams& params) {
    require(lambda > 0.0, "alpha_of_lambda: lambda must be positive");
    params.validate();
    require(params.sigma2 > 0.0, "alpha_of_lambda: sigma2 must be positive");
    const double a0 = alpha_floor(params.delta);
    auto h = [&](double a) { return calibrate_lambda(a, params) - lambda; };

    // Geometric grid a0 + 1e-6 * 2^k up to alpha = 1e3.
    std::vector<double> grid;
    for (double step = 1e-6; a0 + step <= 1e3; step *= 2.0) grid.push_back(a0 + step);
    grid.push_back(1e3);
    std::vector<double> values;
    values.reserve(grid.size());
    for (double a : grid) values.push_back(h(a));

    std::optional<std::pair<double, double>> bracket;
    int sign_changes = 0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if ((values[k - 1] < 0.0) != (values[k] < 0.0)) {
            ++sign_changes;
            if (!bracket) bracket = std::make_pair(grid[k - 1], grid[k]);
        }
    }
    if (!bracket && values.front() >= 0.0) {
        // Root between alpha_min and the first grid point.
        const double lo = a0 + 1e-12;
        if (h(lo) < 0.0) bracket = std::make_pair(lo, grid.front());
    }
    if (!bracket) throw NumericalError("alpha_of_lambda: no bracket for lambda below alpha = 1e3");
    if (sign_changes > 1)
        std::cerr << "warning: alpha_of_lambda found " << sign_changes << " brackets for lambda=" << lambda
                  << "; returning the smallest root\n";
    return bisect(h, bracket->first, bracket->second, 1e-12);
}

LassoRisk lasso_risk(double lambda, const ModelParams& params) {
    require(params.prior.sparsity() > 0.0, "lasso_risk: prior must put mass off zero");
    LassoRisk out;
    out.alpha = alpha_of_lambda(lambda, params);
    out.tau_star = se_fixed_point(params, out.alpha);
    out.theta_star = out.alpha * out.tau_star;
    out.mse_per_coord = params.delta * (out.tau_star * out.tau_star - params.sigma2);
    out.mse_direct = st_mse(params.prior, out.tau_star, out.theta_star);
    if (std::abs(out.mse_per_coord - out.mse_direct) > 1e-10 * std::max(1.0, out.mse_direct))
        throw NumericalError("lasso_risk: fixed-point identity violated");
    return out;
}

double rho_c(double delta) {
    require(delta > 0.0 && delta < 1.0, "rho_c: delta must lie in (0,1)");
    // M#(rho delta) - delta increases from -delta (rho -> 0) to M#(delta) - delta > 0 (rho = 1).
    auto h = [delta](double rho) { return minimax_soft_threshold(rho * delta).m_sharp - delta; };
    return bisect(h, 1e-300, 1.0 - 1e-15, 1e-13);
}

double minimax_risk_star(double delta, double rho) {
    require(delta > 0.0 && delta < 1.0, "minimax_risk_star: delta must lie in (0,1)");
    require(rho > 0.0, "minimax_risk_star: rho must be positive");
    if (rho >= rho_c(delta)) return std::numeric_limits<double>::infinity();
    const double m = minimax_soft_threshold(rho * delta).m_sharp;
    return m / (1.0 - m / delta);
}

PhasePoint phase_point(double delta, double rho) {
    return PhasePoint{delta, rho, rho_c(delta), minimax_risk_star(delta, rho)};
}

std::pair<double, double> parametric_boundary(double alpha) {
    require(alpha >= 0.0, "parametric_boundary: alpha must be nonnegative");
    const double phi = gauss::pdf(alpha);
    const double tail = gauss::cdf(-alpha);
    const double delta = 2.0 * phi / (alpha + 2.0 * (phi - alpha * tail));
    const double rho = 1.0 - alpha * tail / phi;
    return {delta, rho};
}

double boundary_alpha(double delta) {
    require(delta > 0.0 && delta <= 1.0, "boundary_alpha: delta must lie in (0,1]");
    if (delta == 1.0) return 0.0;
    // delta(alpha) decreases from 1 at alpha = 0.
    return bisect([delta](double a) { return parametric_boundary(a).first - delta; }, 0.0, 30.0, 1e-13);
}

} // namespace amp
