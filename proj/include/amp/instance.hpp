#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "amp/error.hpp"
#include "amp/prior.hpp"
#include "amp/rng.hpp"

namespace amp {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Ensemble { Gaussian, Rademacher };

std::string to_string(Ensemble e);
Ensemble parse_ensemble(const std::string& name);

struct ModelParams {
    double delta = 0.64;  // m / n
    double sigma2 = 0.0;  // E{W^2}
    DiscretePrior prior = DiscretePrior::point_mass(0.0);

    void validate() const {
        require(delta > 0.0, "ModelParams: delta must be positive");
        require(sigma2 >= 0.0, "ModelParams: sigma2 must be nonnegative");
    }
};

/// One realisation y = A x0 + w. Immutable after construction.
template <typename Scalar>
struct Instance {
    Matrix<Scalar> a;
    Vector<Scalar> x0;
    Vector<Scalar> w;
    Vector<Scalar> y;
    Eigen::Index m = 0;
    Eigen::Index n = 0;
    double delta = 0.0;
    std::uint64_t seed = 0;
};

using InstanceXd = Instance<double>;

/// m = round(delta * n), ties to even.
inline Eigen::Index measurements_for(Eigen::Index n, double delta) {
    return static_cast<Eigen::Index>(std::nearbyint(delta * static_cast<double>(n)));
}

template <typename Scalar = double>
Matrix<Scalar> sensing_matrix(Ensemble ensemble, Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
    require(m >= 1 && n >= 1, "sensing_matrix: dimensions must be positive");
    Rng rng(seed);
    Matrix<Scalar> a(m, n);
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(m));
    if (ensemble == Ensemble::Gaussian) {
        std::normal_distribution<Scalar> normal(Scalar(0), scale);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m; ++i) a(i, j) = normal(rng);
    } else {
        // 64 signs per draw.
        std::uint64_t bits = 0;
        int left = 0;
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m; ++i) {
                if (left == 0) {
                    bits = rng();
                    left = 64;
                }
                a(i, j) = (bits & 1U) ? scale : -scale;
                bits >>= 1;
                --left;
            }
    }
    return a;
}

/// Assemble y = A x0 + w with w i.i.d. normal(0, sigma2).
template <typename Scalar>
Instance<Scalar> assemble_instance(Matrix<Scalar> a, Vector<Scalar> x0, double sigma2, std::uint64_t noise_seed,
                                   std::uint64_t seed) {
    require(a.cols() == x0.size(), "assemble_instance: A and x0 disagree on n");
    require(sigma2 >= 0.0, "assemble_instance: sigma2 must be nonnegative");
    Instance<Scalar> inst;
    inst.m = a.rows();
    inst.n = a.cols();
    inst.delta = static_cast<double>(inst.m) / static_cast<double>(inst.n);
    inst.seed = seed;
    inst.w = Vector<Scalar>::Zero(inst.m);
    if (sigma2 > 0.0) {
        Rng rng(noise_seed);
        std::normal_distribution<Scalar> normal(Scalar(0), static_cast<Scalar>(std::sqrt(sigma2)));
        for (Eigen::Index i = 0; i < inst.m; ++i) inst.w[i] = normal(rng);
    }
    inst.y = a * x0 + inst.w;
    inst.a = std::move(a);
    inst.x0 = std::move(x0);
    return inst;
}

/// Independent streams for matrix, signal and noise, all derived from one seed.
struct InstanceSeeds {
    std::uint64_t matrix, signal, noise;
    explicit InstanceSeeds(std::uint64_t seed)
        : matrix(derive_seed(seed, {0})), signal(derive_seed(seed, {1})), noise(derive_seed(seed, {2})) {}
};

template <typename Scalar = double>
Instance<Scalar> gen_instance(Ensemble ensemble, Eigen::Index n, const ModelParams& params, std::uint64_t seed) {
    params.validate();
    require(n >= 2, "gen_instance: n must be >= 2");
    const Eigen::Index m = measurements_for(n, params.delta);
    require(m >= 1, "gen_instance: round(delta * n) must be >= 1");
    const InstanceSeeds seeds(seed);
    Vector<Scalar> x0 = sample(params.prior, n, seeds.signal).template cast<Scalar>();
    return assemble_instance<Scalar>(sensing_matrix<Scalar>(ensemble, m, n, seeds.matrix), std::move(x0),
                                     params.sigma2, seeds.noise, seed);
}

/// A entries i.i.d. normal(0, 1/m). Columns are not renormalised.
template <typename Scalar = double>
Instance<Scalar> gen_gaussian_instance(Eigen::Index n, const ModelParams& params, std::uint64_t seed) {
    return gen_instance<Scalar>(Ensemble::Gaussian, n, params, seed);
}

/// A entries uniform on {+1/sqrt(m), -1/sqrt(m)}; every column has unit norm.
template <typename Scalar = double>
Instance<Scalar> gen_rademacher_instance(Eigen::Index n, const ModelParams& params, std::uint64_t seed) {
    return gen_instance<Scalar>(Ensemble::Rademacher, n, params, seed);
}

/// Exactly k entries equal to +-magnitude (uniform support, fair signs), rest zero.
Eigen::VectorXd sparse_sign_signal(Eigen::Index n, Eigen::Index k, std::uint64_t seed, double magnitude = 1.0);

struct ConvergingReport {
    double max_column_norm = 0.0;
    double min_column_norm = 0.0;
    double norm_tolerance = 0.0;
    double signal_second_moment = 0.0;
    double signal_tolerance = 0.0;
    double noise_variance = 0.0;
    double noise_tolerance = 0.0;
    bool norms_ok = false;
    bool signal_ok = false;
    bool noise_ok = false;
    bool pass() const { return norms_ok && signal_ok && noise_ok; }
};

/// Finite-size diagnostics: column norms within 5/sqrt(m) of 1, empirical
/// second moments within 5 standard errors of their population values.
ConvergingReport check_converging(const InstanceXd& instance, const ModelParams& params);

/// Writes `<prefix>.json` (m, n, delta, sigma2, seed, ensemble) and `<prefix>.bin`
/// (little-endian float64: A row-major, then x0, w, y).
void save_instance(const InstanceXd& instance, double sigma2, Ensemble ensemble, const std::string& prefix);

struct LoadedInstance {
    InstanceXd instance;
    double sigma2 = 0.0;
    Ensemble ensemble = Ensemble::Gaussian;
};
LoadedInstance load_instance(const std::string& prefix);

} // namespace amp
