#pragma once

#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "amp/instance.hpp"
#include "amp/prior.hpp"

namespace amp {

/// F(tau2, theta) = sigma2 + E{[eta(X0 + tau Z; theta) - X0]^2} / delta.
double se_map(double tau2, double theta, const ModelParams& params);

struct SETrajectory {
    std::vector<double> tau2_sequence;   // tau_0^2, tau_1^2, ...
    std::vector<double> theta_sequence;  // theta_t used to produce tau_{t+1}^2
    bool converged = false;
    std::optional<double> tau_star;
};

/// tau_{t+1}^2 = F(tau_t^2, alpha tau_t) from tau_0^2 = sigma2 + E{X0^2}/delta.
SETrajectory se_run(const ModelParams& params, double alpha, int max_iter = 1000, double tol = 1e-12);

/// Same recursion with an explicit threshold sequence; returns tau_0^2 .. tau_T^2.
std::vector<double> se_track(const ModelParams& params, const std::vector<double>& thetas);

/// Unique nonnegative root of (1 + a^2) Phi(-a) - a phi(a) = delta / 2, for delta in (0, 1].
double alpha_min(double delta);

/// Unique fixed point tau* of tau^2 = F(tau^2, alpha tau); requires sigma2 > 0 and
/// alpha > alpha_min(delta).
double se_fixed_point(const ModelParams& params, double alpha);

/// lambda(alpha) = alpha tau* [1 - P{|X0 + tau* Z| >= alpha tau*} / delta].
double calibrate_lambda(double alpha, const ModelParams& params);

/// Smallest root of calibrate_lambda(alpha) = lambda above alpha_min(delta).
double alpha_of_lambda(double lambda, const ModelParams& params);

struct LassoRisk {
    double mse_per_coord;  // delta (tau*^2 - sigma2)
    double mse_direct;     // E{[eta(X0 + tau* Z; theta*) - X0]^2}
    double tau_star;
    double theta_star;
    double alpha;
};

/// Asymptotic LASSO risk at regularisation lambda.
LassoRisk lasso_risk(double lambda, const ModelParams& params);

/// Noise-sensitivity boundary: the rho solving M#(rho delta) = delta.
double rho_c(double delta);

/// M#(rho delta) / (1 - M#(rho delta)/delta) below rho_c(delta), +infinity above.
double minimax_risk_star(double delta, double rho);

struct PhasePoint {
    double delta;
    double rho;
    double rho_c;
    double m_star;  // +infinity at or above the boundary
};
PhasePoint phase_point(double delta, double rho);

/// Boundary point (delta(alpha), rho(alpha)) achieved by AMP with threshold multiplier alpha.
std::pair<double, double> parametric_boundary(double alpha);

/// alpha such that delta(alpha) = delta on the parametric boundary.
double boundary_alpha(double delta);

} // namespace amp
