#include "amp/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "amp/error.hpp"
#include "amp/gaussian.hpp"
#include "amp/rng.hpp"

namespace amp {

DiscretePrior DiscretePrior::make(std::vector<double> atoms, std::vector<double> weights) {
    require(!atoms.empty(), "prior: need at least one atom");
    require(atoms.size() == weights.size(), "prior: atoms and weights differ in length");
    double total = 0.0;
    for (double w : weights) {
        require(std::isfinite(w) && w >= 0.0, "prior: weights must be nonnegative");
        total += w;
    }
    require(std::abs(total - 1.0) <= 1e-12, "prior: weights must sum to 1");
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        require(std::isfinite(atoms[i]), "prior: atoms must be finite");
        for (std::size_t j = 0; j < i; ++j)
            require(atoms[i] != atoms[j], "prior: atoms must be pairwise distinct");
    }
    return DiscretePrior{std::move(atoms), std::move(weights)};
}

DiscretePrior DiscretePrior::point_mass(double value) { return make({value}, {1.0}); }

DiscretePrior DiscretePrior::three_point(double eps, double magnitude) {
    require(eps >= 0.0 && eps <= 1.0, "three_point: eps must lie in [0,1]");
    require(magnitude > 0.0, "three_point: magnitude must be positive");
    if (eps == 0.0) return point_mass(0.0);
    if (eps == 1.0) return make({-magnitude, magnitude}, {0.5, 0.5});
    return make({-magnitude, 0.0, magnitude}, {eps / 2, 1.0 - eps, eps / 2});
}

double DiscretePrior::sparsity() const {
    for (std::size_t k = 0; k < atoms.size(); ++k)
        if (atoms[k] == 0.0) return 1.0 - weights[k];
    return 1.0;
}

DiscretePrior parse_prior(const std::string& text) {
    using nlohmann::json;
    json j;
    static const std::regex literal(R"(^\s*atoms\s*=\s*(\[[^\]]*\])\s*,?\s*weights\s*=\s*(\[[^\]]*\])\s*$)");
    std::smatch match;
    try {
        if (std::regex_match(text, match, literal)) {
            j["atoms"] = json::parse(match[1].str());
            j["weights"] = json::parse(match[2].str());
        } else {
            j = json::parse(text);
        }
        return DiscretePrior::make(j.at("atoms").get<std::vector<double>>(),
                                   j.at("weights").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw SpecError(std::string("prior: cannot parse '") + text + "': " + e.what());
    }
}

std::string to_json(const DiscretePrior& prior) {
    nlohmann::json j;
    j["atoms"] = prior.atoms;
    j["weights"] = prior.weights;
    return j.dump();
}

Eigen::VectorXd sample(const DiscretePrior& prior, Eigen::Index n, std::uint64_t seed) {
    require(n >= 1, "sample: n must be >= 1");
    std::vector<double> cumulative(prior.weights.size());
    std::partial_sum(prior.weights.begin(), prior.weights.end(), cumulative.begin());
    cumulative.back() = 1.0;

    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = unif(rng);
        const auto k = std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
        out[i] = prior.atoms[std::min<std::size_t>(k, prior.atoms.size() - 1)];
    }
    return out;
}

double second_moment(const DiscretePrior& prior) {
    double s = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) s += prior.weights[k] * prior.atoms[k] * prior.atoms[k];
    return s;
}

namespace {

// Phi(hi) - Phi(lo) for lo <= hi, evaluated on the side that avoids cancellation.
double gaussian_mass(double lo, double hi) {
    if (lo > 0.0) return gauss::sf(lo) - gauss::sf(hi);
    return gauss::cdf(hi) - gauss::cdf(lo);
}

} // namespace

double st_mse(const DiscretePrior& prior, double tau, double theta) {
    require(tau > 0.0, "st_mse: tau must be positive");
    require(theta >= 0.0, "st_mse: theta must be nonnegative");
    const double s2 = tau * tau + theta * theta;
    double total = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) {
        const double x0 = prior.atoms[k];
        const double hi = (theta - x0) / tau;
        const double lo = (-theta - x0) / tau;
        // Y > theta: error tau Z - theta; Y < -theta: tau Z + theta; dead zone: -x0.
        const double upper = s2 * gauss::sf(hi) - tau * (theta + x0) * gauss::pdf(hi);
        const double lower = s2 * gauss::cdf(lo) - tau * (theta - x0) * gauss::pdf(lo);
        const double dead = x0 * x0 * gaussian_mass(lo, hi);
        total += prior.weights[k] * (upper + lower + dead);
    }
    return total;
}

double st_keep_prob(const DiscretePrior& prior, double tau, double theta) {
    require(tau > 0.0, "st_keep_prob: tau must be positive");
    require(theta >= 0.0, "st_keep_prob: theta must be nonnegative");
    double total = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) {
        const double x0 = prior.atoms[k];
        total += prior.weights[k] * (gauss::sf((theta - x0) / tau) + gauss::cdf((-theta - x0) / tau));
    }
    return std::min(total, 1.0);
}

} // namespace amp
