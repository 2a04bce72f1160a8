#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include <Eigen/SVD>

#include "amp/amp.hpp"
#include "amp/state_evolution.hpp"

using namespace amp;

namespace {

const ModelParams kBase{0.64, 0.2, DiscretePrior::three_point(0.128)};

RunOptions until(double tol, long max_iter = 2000) { return {max_iter, tol, true, false}; }

} // namespace

TEST_CASE("tau estimators") {
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
    CHECK(estimate_tau(ones, TauEstimator::Rms) == 1.0);
    CHECK(estimate_tau(Eigen::VectorXd::Zero(4), TauEstimator::Rms) == 0.0);
    CHECK(estimate_tau(Eigen::VectorXd::Zero(4), TauEstimator::Median) == 0.0);
    Eigen::VectorXd r(4);
    r << 4.0, -1.0, 3.0, -2.0;
    CHECK(estimate_tau(r, TauEstimator::Median) == doctest::Approx(2.0 / 0.674489750196081743).epsilon(1e-14));
    r.resize(5);
    r << 4.0, -1.0, 3.0, -2.0, 10.0;
    CHECK(estimate_tau(r, TauEstimator::Median) == doctest::Approx(3.0 / 0.674489750196081743).epsilon(1e-14));
    CHECK_THROWS_AS(estimate_tau(Eigen::VectorXd(0), TauEstimator::Rms), SpecError);

    Rng rng(17);
    std::normal_distribution<double> normal(0.0, 2.0);
    Eigen::VectorXd big(100000);
    for (auto& v : big) v = normal(rng);
    CHECK(std::abs(estimate_tau(big, TauEstimator::Rms) - 2.0) <= 0.05);
    CHECK(std::abs(estimate_tau(big, TauEstimator::Median) - 2.0) <= 0.05);
}

TEST_CASE("threshold policy") {
    CHECK(ThresholdPolicy::rms(2.0).theta(5, 0.3) == doctest::Approx(0.6));
    const auto fixed = ThresholdPolicy::fixed_sequence({0.5, 0.4, 0.3});
    CHECK(fixed.theta(0, 99.0) == 0.5);
    CHECK(fixed.theta(2, 99.0) == 0.3);
    CHECK(fixed.theta(10, 99.0) == 0.3);
    CHECK_THROWS_AS(ThresholdPolicy::rms(0.0).validate(), SpecError);
    CHECK_THROWS_AS(ThresholdPolicy::fixed_sequence({0.5, -0.1}), SpecError);
}

TEST_CASE("first step has no memory term") {
    const auto inst = gen_gaussian_instance<double>(500, kBase, 1);
    const auto s0 = AmpState<double>::initial(inst);
    CHECK(s0.x.isZero(0.0));
    CHECK(s0.r == inst.y);
    CHECK(s0.r_prev.isZero(0.0));
    CHECK(s0.b == 0.0);
    const auto s1 = amp_step(s0, inst, ThresholdPolicy::rms(2.0));
    CHECK(s1.t == 1);
    CHECK(s1.r == inst.y);
    CHECK(s1.tau_hat == doctest::Approx(inst.y.norm() / std::sqrt(static_cast<double>(inst.m))).epsilon(1e-14));
    const Eigen::VectorXd expected = soft_threshold((inst.a.transpose() * inst.y).eval(), s1.theta);
    CHECK((s1.x - expected).norm() < 1e-12);
    CHECK(s1.b == static_cast<double>(count_nonzero(s1.x)) / inst.m);
}

TEST_CASE("Onsager term uses the current support size") {
    const auto inst = gen_gaussian_instance<double>(400, kBase, 2);
    const auto policy = ThresholdPolicy::rms(1.5);
    auto s = AmpState<double>::initial(inst);
    for (int t = 0; t < 8; ++t) {
        const auto next = amp_step(s, inst, policy);
        const double b = static_cast<double>(count_nonzero(s.x)) / inst.m;
        const Eigen::VectorXd r = inst.y - inst.a * s.x + b * s.r;
        CHECK((next.r - r).norm() < 1e-10);
        CHECK(next.r_prev == s.r);
        CHECK(next.b == doctest::Approx(onsager_from_derivative(next.u, next.theta, inst.m)).epsilon(1e-15));
        CHECK(next.b >= 0.0);
        CHECK(next.b <= static_cast<double>(inst.n) / inst.m);
        s = next;
    }
}

TEST_CASE("zero data is a fixed point for AMP and IST") {
    auto inst = gen_gaussian_instance<double>(300, {0.5, 0.0, DiscretePrior::point_mass()}, 3);
    REQUIRE(inst.y.isZero(0.0));
    auto s = AmpState<double>::initial(inst);
    auto q = s;
    for (int t = 0; t < 5; ++t) {
        s = amp_step(s, inst, ThresholdPolicy::rms(1.0));
        q = ist_step(q, inst, ThresholdPolicy::rms(1.0), 0.5);
        CHECK(s.x.isZero(0.0));
        CHECK(q.x.isZero(0.0));
    }
    const auto res = amp_run(inst, ThresholdPolicy::rms(1.0), until(1e-8));
    CHECK(res.converged);
    CHECK(res.iterations == 1);
    CHECK(res.x_hat.isZero(0.0));
    const auto ist = ist_run(inst, ThresholdPolicy::rms(1.0), until(1e-8), 0.95);
    CHECK(ist.converged);
    CHECK(ist.x_hat.isZero(0.0));
}

TEST_CASE("final tau estimate matches the state evolution fixed point") {
    const double tau_star = se_fixed_point(kBase, 2.0);
    for (std::uint64_t seed : {1, 2}) {
        const auto inst = gen_gaussian_instance<double>(2000, kBase, seed);
        const auto res = amp_run(inst, ThresholdPolicy::rms(2.0), until(1e-9));
        CHECK(res.converged);
        CHECK(std::abs(res.final_state.tau_hat / tau_star - 1.0) < 0.05);
        // Effective lambda against the calibration map.
        CHECK(std::abs(res.lambda_effective() / calibrate_lambda(2.0, kBase) - 1.0) < 0.05);
    }
}

TEST_CASE("median estimator also converges to a LASSO point") {
    const auto inst = gen_gaussian_instance<double>(1000, kBase, 9);
    const auto res = amp_run(inst, ThresholdPolicy::median(2.0), until(1e-10));
    CHECK(res.converged);
    CHECK(lasso_kkt_gap(inst, res.x_hat, res.lambda_effective()) <= 1e-4 * res.lambda_effective());
}

TEST_CASE("trajectory rows") {
    const auto inst = gen_gaussian_instance<double>(500, kBase, 4);
    const auto res = amp_run(inst, ThresholdPolicy::rms(2.0), {30, 1e-12, true, true});
    REQUIRE(res.trajectory.size() == static_cast<std::size_t>(res.iterations + 1));
    CHECK(res.trajectory[0].t == 0);
    CHECK(*res.trajectory[0].mse == doctest::Approx(inst.x0.squaredNorm() / inst.n));
    for (std::size_t k = 1; k < res.trajectory.size(); ++k) {
        CHECK(res.trajectory[k].t == static_cast<long>(k));
        CHECK(res.trajectory[k].mse.has_value());
        CHECK(res.trajectory[k].kkt_gap.has_value());
    }
    CHECK(*res.trajectory.back().mse == doctest::Approx((res.x_hat - inst.x0).squaredNorm() / inst.n));
}

TEST_CASE("effective lambda") {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(10);
    CHECK(effective_lambda(x, 1.3, 4) == 1.3);
    x.head(2).setOnes();
    CHECK(effective_lambda(x, 1.0, 4) == 0.5);
    x.head(4).setOnes();
    CHECK_THROWS_AS(effective_lambda(x, 1.0, 4), SpecError);
    CHECK_THROWS_AS(effective_lambda(x, -1.0, 40), SpecError);
}

TEST_CASE("KKT gap") {
    const auto inst = gen_gaussian_instance<double>(200, kBase, 5);
    const double big = (inst.a.transpose() * inst.y).lpNorm<Eigen::Infinity>();
    CHECK(lasso_kkt_gap(inst, Eigen::VectorXd(Eigen::VectorXd::Zero(inst.n)), big) == 0.0);
    CHECK(lasso_kkt_gap(inst, Eigen::VectorXd(Eigen::VectorXd::Zero(inst.n)), 0.5 * big) > 0.0);
    CHECK_THROWS_AS(lasso_kkt_gap(inst, Eigen::VectorXd(Eigen::VectorXd::Zero(inst.n)), 0.0), SpecError);

    // One variable: closed form eta(a'y/|a|^2; lambda/|a|^2).
    InstanceXd one;
    one.m = 3;
    one.n = 1;
    one.a = Eigen::MatrixXd(3, 1);
    one.a << 0.6, -0.3, 0.9;
    one.x0 = Eigen::VectorXd::Constant(1, 2.0);
    one.w = Eigen::VectorXd::Zero(3);
    one.y = one.a * one.x0;
    for (double lambda : {0.1, 1.0, 2.3}) {
        const double s = one.a.squaredNorm();
        const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, soft_threshold(one.a.col(0).dot(one.y) / s, lambda / s));
        CHECK(lasso_kkt_gap(one, x, lambda) <= 1e-12);
    }
}

TEST_CASE("converged AMP is a LASSO minimiser at its effective lambda") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto inst = gen_gaussian_instance<double>(500, kBase, seed);
        const auto res = amp_run(inst, ThresholdPolicy::rms(1.8), until(1e-10, 5000));
        REQUIRE(res.converged);
        const double lam = res.lambda_effective();
        CHECK(lasso_kkt_gap(inst, res.x_hat, lam) <= 1e-4 * lam);
    }
}

TEST_CASE("fixed threshold sequences: convergence implies stationarity") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed)
        for (double theta : {0.6, 1.0, 1.6}) {
            const auto inst = gen_gaussian_instance<double>(400, kBase, seed);
            const auto res = amp_run(inst, ThresholdPolicy::fixed_sequence({theta}), until(1e-11, 5000));
            if (!res.converged) continue;
            const double lam = theta * (1.0 - res.final_state.b);
            CAPTURE(seed);
            CAPTURE(theta);
            CHECK(lasso_kkt_gap(inst, res.x_hat, lam) <= 1e-4 * lam);
        }
}

TEST_CASE("IST reaches the same LASSO minimiser as AMP") {
    const auto inst = gen_gaussian_instance<double>(500, kBase, 6);
    const auto res = amp_run(inst, ThresholdPolicy::rms(2.0), until(1e-12, 5000));
    REQUIRE(res.converged);
    const double lam = res.lambda_effective();
    const double c = 0.95 / operator_norm(inst.a);
    const auto ist = ist_run(inst, ThresholdPolicy::fixed_sequence({lam * c * c}), until(1e-13, 20000), 0.95);
    CHECK(ist.converged);
    CHECK(ist.lambda_effective() == doctest::Approx(lam).epsilon(1e-12));
    CHECK((ist.x_hat - res.x_hat).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(lasso_objective(inst, ist.x_hat, lam) == doctest::Approx(lasso_objective(inst, res.x_hat, lam)).epsilon(1e-10));
    CHECK(ist.iterations > res.iterations);
}

TEST_CASE("adaptive IST threshold lives on the scale of the effective noise") {
    const auto inst = gen_gaussian_instance<double>(500, kBase, 7);
    const auto ist = ist_run(inst, ThresholdPolicy::rms(2.0), until(1e-11, 20000), 0.95);
    CHECK(ist.converged);
    CHECK(count_nonzero(ist.x_hat) > 0);
    const double lam = ist.lambda_effective();
    CHECK(lam == doctest::Approx(2.0 * (inst.y - inst.a * ist.x_hat).norm() / std::sqrt(double(inst.m))).epsilon(1e-8));
    CHECK(lasso_kkt_gap(inst, ist.x_hat, lam) <= 1e-4 * lam);
    CHECK_THROWS_AS(ist_run(inst, ThresholdPolicy::rms(2.0), until(1e-8), 1.5), SpecError);
    CHECK_THROWS_AS(ist_run(inst, ThresholdPolicy::rms(2.0), until(1e-8), 0.0), SpecError);
}

TEST_CASE("an overscaled gradient step blows up loudly") {
    const auto inst = gen_gaussian_instance<double>(300, kBase, 8);
    const double c = 3.0 / operator_norm(inst.a);
    auto s = AmpState<double>::initial(inst);
    const auto policy = ThresholdPolicy::fixed_sequence({1e-3});
    CHECK_THROWS_AS(
        [&] {
            for (int t = 0; t < 10000; ++t) s = ist_step(s, inst, policy, c);
        }(),
        NumericalError);
}

TEST_CASE("operator norm agrees with the SVD") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto inst = gen_gaussian_instance<double>(150, {0.4, 0.0, DiscretePrior::three_point(0.1)}, seed);
        const double svd = Eigen::JacobiSVD<Eigen::MatrixXd>(inst.a).singularValues()[0];
        CHECK(operator_norm(inst.a) == doctest::Approx(svd).epsilon(1e-5));
    }
}

TEST_CASE("degenerate dimensions") {
    InstanceXd one;
    one.m = 1;
    one.n = 1;
    one.a = Eigen::MatrixXd::Constant(1, 1, 1.0);
    one.x0 = Eigen::VectorXd::Constant(1, 3.0);
    one.w = Eigen::VectorXd::Zero(1);
    one.y = Eigen::VectorXd::Constant(1, 3.0);
    auto s = amp_step(AmpState<double>::initial(one), one, ThresholdPolicy::fixed_sequence({1.0}));
    CHECK(s.x[0] == 2.0);
    CHECK(s.b == 1.0);
    const auto ist = ist_run(one, ThresholdPolicy::fixed_sequence({0.5 * 0.95 * 0.95}), until(1e-14, 10000), 0.95);
    CHECK(ist.x_hat[0] == doctest::Approx(2.5).epsilon(1e-10));
    CHECK(operator_norm(one.a) == doctest::Approx(1.0));
}

TEST_CASE("single precision instantiation") {
    const auto inst = gen_gaussian_instance<float>(300, kBase, 1);
    const auto res = amp_run(inst, ThresholdPolicy::rms(2.0), {200, 1e-5, true, false});
    CHECK(res.converged);
    InstanceXd wide;
    wide.a = inst.a.cast<double>();
    wide.x0 = inst.x0.cast<double>();
    wide.w = inst.w.cast<double>();
    wide.y = inst.y.cast<double>();
    wide.m = inst.m;
    wide.n = inst.n;
    const auto ref = amp_run(wide, ThresholdPolicy::rms(2.0), until(1e-9));
    CHECK((res.x_hat.cast<double>() - ref.x_hat).lpNorm<Eigen::Infinity>() < 1e-3);
}

TEST_CASE("per-iteration cost is linear in mn") {
    auto time_steps = [](Eigen::Index n) {
        const auto inst = gen_gaussian_instance<double>(n, kBase, 1);
        const auto policy = ThresholdPolicy::rms(2.0);
        auto s = amp_step(AmpState<double>::initial(inst), inst, policy);
        const auto t0 = std::chrono::steady_clock::now();
        for (int t = 0; t < 20; ++t) s = amp_step(s, inst, policy);
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    const double t1 = time_steps(1000), t2 = time_steps(2000);
    CHECK(t2 / t1 > 2.0);
    CHECK(t2 / t1 < 8.0);
}
