#include "amp/scalar_risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "amp/gaussian.hpp"

namespace amp {

double risk_M(double epsilon, double alpha) {
    require(epsilon >= 0.0 && epsilon <= 1.0, "risk_M: epsilon must lie in [0,1]");
    require(alpha >= 0.0, "risk_M: alpha must be nonnegative");
    const double a2 = 1.0 + alpha * alpha;
    const double null_part = 2.0 * a2 * gauss::cdf(-alpha) - 2.0 * alpha * gauss::pdf(alpha);
    return epsilon * a2 + (1.0 - epsilon) * null_part;
}

MinimaxResult minimax_soft_threshold(double epsilon) {
    require(epsilon > 0.0 && epsilon < 1.0, "minimax_soft_threshold: epsilon must lie in (0,1)");
    // M is convex in alpha (M'' = 2 eps + 4 (1 - eps) Phi(-alpha) > 0), so bisect on
    // M' = 2 eps alpha + 4 (1 - eps) (alpha Phi(-alpha) - phi(alpha)). Minimising M
    // directly only pins alpha to ~sqrt(machine eps) where M is flat.
    auto slope = [epsilon](double a) {
        return 2.0 * epsilon * a + 4.0 * (1.0 - epsilon) * (a * gauss::cdf(-a) - gauss::pdf(a));
    };
    double lo = 0.0;  // slope(0) = -4 (1 - eps) phi(0) < 0
    double hi = std::sqrt(2.0 * std::log(1.0 / epsilon)) + 10.0;
    while (slope(hi) <= 0.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (slope(mid) < 0.0 ? lo : hi) = mid;
    }
    const double alpha = 0.5 * (lo + hi);
    return MinimaxResult{risk_M(epsilon, alpha), alpha, epsilon};
}

double mmse_estimate(const DiscretePrior& prior, double sigma, double y) {
    require(sigma > 0.0, "mmse_estimate: sigma must be positive");
    // log-sum-exp over atoms; the shared factor 1/(sigma sqrt(2 pi)) cancels.
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < prior.size(); ++k) {
        if (prior.weights[k] == 0.0) continue;
        const double z = (y - prior.atoms[k]) / sigma;
        max_log = std::max(max_log, std::log(prior.weights[k]) - 0.5 * z * z);
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) {
        if (prior.weights[k] == 0.0) continue;
        const double z = (y - prior.atoms[k]) / sigma;
        const double w = std::exp(std::log(prior.weights[k]) - 0.5 * z * z - max_log);
        num += w * prior.atoms[k];
        den += w;
    }
    return num / den;
}

double mmse_risk(const DiscretePrior& prior, double sigma) {
    require(sigma > 0.0, "mmse_risk: sigma must be positive");
    using boost::math::quadrature::gauss_kronrod;
    double total = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) {
        if (prior.weights[k] == 0.0) continue;
        const double x0 = prior.atoms[k];
        auto integrand = [&](double z) {
            const double err = mmse_estimate(prior, sigma, x0 + sigma * z) - x0;
            return err * err * gauss::pdf(z);
        };
        // Integrate in the standardised variable z = (y - x0)/sigma over [-12, 12].
        double abs_err = 0.0;
        double l1 = 0.0;
        const double value = gauss_kronrod<double, 61>::integrate(integrand, -12.0, 12.0, 30, 1e-13, &abs_err, &l1);
        total += prior.weights[k] * value;
    }
    return total;
}

} // namespace amp
