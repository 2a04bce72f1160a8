#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace amp {

// Finite mixture of point masses: P{X0 = atoms[k]} = weights[k].
struct DiscretePrior {
    std::vector<double> atoms;
    std::vector<double> weights;

    // Validates weights (nonnegative, sum to 1 within 1e-12) and distinct atoms.
    static DiscretePrior make(std::vector<double> atoms, std::vector<double> weights);
    static DiscretePrior point_mass(double value = 0.0);
    // (eps/2) delta_{+a} + (1 - eps) delta_0 + (eps/2) delta_{-a}
    static DiscretePrior three_point(double eps, double magnitude = 1.0);

    // 1 - P{X0 = 0}; equals 1 when 0 is not an atom.
    double sparsity() const;
    std::size_t size() const { return atoms.size(); }
};

// Accepts either a JSON object {"atoms": [...], "weights": [...]} or the
// literal form `atoms=[-1,0,1] weights=[0.064,0.872,0.064]`.
DiscretePrior parse_prior(const std::string& text);
std::string to_json(const DiscretePrior& prior);

Eigen::VectorXd sample(const DiscretePrior& prior, Eigen::Index n, std::uint64_t seed);

double second_moment(const DiscretePrior& prior);

// E{[eta(X0 + tau Z; theta) - X0]^2}, closed form per atom.
double st_mse(const DiscretePrior& prior, double tau, double theta);

// P{|X0 + tau Z| >= theta}.
double st_keep_prob(const DiscretePrior& prior, double tau, double theta);

} // namespace amp
