#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "amp/harness.hpp"
#include "amp/state_evolution.hpp"

using namespace amp;

namespace {

ExperimentSpec small(ExperimentKind kind) {
    ExperimentSpec s;
    s.kind = kind;
    s.n = 200;
    s.params = {0.64, 0.2, DiscretePrior::three_point(0.128)};
    s.seeds = {1, 2, 3};
    s.lambdas = {0.5, 1.0};
    s.iterations = 5;
    s.sparsity_levels = {10, 20};
    s.grid = 5;
    if (kind == ExperimentKind::Convergence) s.params.sigma2 = 0.0;
    return s;
}

std::string all_csv(const ExperimentResult& r) {
    std::string out;
    for (const auto& t : r.tables) out += t.name + "\n" + t.to_csv();
    return out;
}

double cell(const Table& t, std::size_t row, const std::string& col) {
    for (std::size_t k = 0; k < t.header.size(); ++k)
        if (t.header[k] == col) return std::stod(t.rows.at(row).at(k));
    FAIL("no column " << col);
    return 0.0;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("kind names round trip") {
    for (auto k : {ExperimentKind::MseVsLambda, ExperimentKind::Convergence, ExperimentKind::NoiseHistogram,
                   ExperimentKind::SeTracking, ExperimentKind::ResampledOracle, ExperimentKind::PhaseCurve})
        CHECK(parse_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_kind("nope"), SpecError);
}

TEST_CASE("spec JSON round trip and hash") {
    auto s = small(ExperimentKind::MseVsLambda);
    s.ensemble = Ensemble::Rademacher;
    s.estimator = TauEstimator::Median;
    const auto j = s.to_json();
    const auto back = ExperimentSpec::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(spec_hash(back) == spec_hash(s));
    CHECK(spec_hash(s).size() == 40);
    auto t = s;
    t.lambdas.push_back(1.5);
    CHECK(spec_hash(t) != spec_hash(s));
    // jobs and output paths do not change the experiment.
    t = s;
    t.jobs = 4;
    CHECK(spec_hash(t) == spec_hash(s));
    CHECK_THROWS_AS(ExperimentSpec::from_json(nlohmann::json{{"kind", 3}}), SpecError);
    CHECK_THROWS_AS(ExperimentSpec::from_json(nlohmann::json{{"kind", "bogus"}}), SpecError);
}

TEST_CASE("spec validation") {
    auto s = small(ExperimentKind::MseVsLambda);
    s.validate();
    auto bad = s;
    bad.lambdas.clear();
    CHECK_THROWS_AS(bad.validate(), SpecError);
    bad = s;
    bad.seeds.clear();
    CHECK_THROWS_AS(bad.validate(), SpecError);
    bad = s;
    bad.params.sigma2 = 0.0;
    CHECK_THROWS_AS(bad.validate(), SpecError);
    bad = s;
    bad.lambdas = {-1.0};
    CHECK_THROWS_AS(bad.validate(), SpecError);
    bad = small(ExperimentKind::Convergence);
    bad.params.sigma2 = 0.1;
    CHECK_THROWS_AS(bad.validate(), SpecError);
    bad = small(ExperimentKind::Convergence);
    bad.ist_opnorm = 1.2;
    CHECK_THROWS_AS(bad.validate(), SpecError);
    bad = small(ExperimentKind::PhaseCurve);
    bad.grid = 1;
    CHECK_THROWS_AS(bad.validate(), SpecError);
}

TEST_CASE("fmt and csv") {
    CHECK(fmt_num(0.5) == "0.5");
    CHECK(fmt_num(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(fmt_num(std::numeric_limits<double>::infinity()) == "inf");
    Table t{"", {"a", "b"}, {}};
    t.add({"1", "2"});
    CHECK(t.to_csv() == "a,b\n1,2\n");
}

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), 3, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) { if (i == 7) throw NumericalError("x"); }), NumericalError);
}

TEST_CASE("MSE vs lambda") {
    const auto s = small(ExperimentKind::MseVsLambda);
    const auto r = run_experiment(s);
    REQUIRE(r.tables.size() == 1);
    const auto& t = r.tables[0];
    CHECK(t.header.front() == "lambda");
    REQUIRE(t.rows.size() == 2);
    CHECK(cell(t, 0, "predicted_mse") == doctest::Approx(0.0962144148719169161747305149486).epsilon(1e-9));
    CHECK(cell(t, 1, "predicted_mse") == doctest::Approx(0.104745673651725266362515130233).epsilon(1e-9));
    CHECK(cell(t, 0, "seeds_ok") == 3);
    CHECK(cell(t, 0, "seeds_failed") == 0);
    CHECK(r.outcomes.size() == 6);
    // Small n: empirical and predicted agree loosely.
    for (std::size_t k = 0; k < 2; ++k)
        CHECK(std::abs(cell(t, k, "empirical_mse_mean") / cell(t, k, "predicted_mse") - 1.0) < 0.5);
}

TEST_CASE("zero-signal lane matches the pure-noise closed form") {
    auto s = small(ExperimentKind::MseVsLambda);
    s.n = 1000;
    s.params.prior = DiscretePrior::point_mass();
    const auto r = run_experiment(s);
    const auto& t = r.tables[0];
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        // tau*^2 = sigma2 / (1 - null_risk(alpha)/delta), MSE = delta (tau*^2 - sigma2).
        const double a = cell(t, k, "alpha");
        const double null_risk = 2.0 * ((1.0 + a * a) * 0.5 * std::erfc(a / std::sqrt(2.0)) -
                                        a * std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI));
        const double tau2 = 0.2 / (1.0 - null_risk / 0.64);
        CHECK(cell(t, k, "predicted_mse") == doctest::Approx(0.64 * (tau2 - 0.2)).epsilon(1e-9));
        CHECK(std::abs(cell(t, k, "empirical_mse_mean") - cell(t, k, "predicted_mse")) <
              5.0 * cell(t, k, "empirical_mse_se") + 0.1 * cell(t, k, "predicted_mse"));
    }
}

TEST_CASE("runs are reproducible and independent of the thread count") {
    for (auto kind : {ExperimentKind::MseVsLambda, ExperimentKind::Convergence, ExperimentKind::NoiseHistogram,
                      ExperimentKind::SeTracking, ExperimentKind::ResampledOracle}) {
        CAPTURE(to_string(kind));
        auto s = small(kind);
        const auto a = all_csv(run_experiment(s));
        CHECK(a == all_csv(run_experiment(s)));
        s.jobs = 2;
        CHECK(a == all_csv(run_experiment(s)));
    }
}

TEST_CASE("convergence tables") {
    auto s = small(ExperimentKind::Convergence);
    s.max_iter = 300;
    const auto r = run_experiment(s);
    REQUIRE(r.tables.size() == 2);
    CHECK(r.tables[0].header == std::vector<std::string>{"t", "engine", "nonzeros", "seed", "mse"});
    CHECK(r.tables[1].name == "summary");
    CHECK(r.tables[1].rows.size() == 6);
    // Initial MSE is the signal energy per coordinate.
    CHECK(r.tables[0].rows[0][0] == "0");
    CHECK(std::stod(r.tables[0].rows[0][4]) == doctest::Approx(10.0 / 200.0));
}

TEST_CASE("effective noise histogram") {
    auto s = small(ExperimentKind::NoiseHistogram);
    s.nonzeros = 20;
    s.params.sigma2 = 0.0;
    const auto r = run_experiment(s);
    REQUIRE(r.tables.size() == 2);
    long total = 0;
    for (const auto& row : r.tables[0].rows)
        if (row[0] == "AMP") total += std::stol(row[2]);
    const auto pooled = pooled_unthresholded(s);
    CHECK(total == static_cast<long>(pooled.amp.size()));
    CHECK(pooled.amp.size() == pooled.ist.size());
    CHECK(pooled.amp.size() > 0);
    CHECK(r.summary.contains("AMP"));
    CHECK(r.summary.contains("IST"));
}

TEST_CASE("SE tracking starts at the same tau_0^2") {
    auto s = small(ExperimentKind::SeTracking);
    s.n = 1000;
    const auto r = run_experiment(s);
    const auto& t = r.tables[0];
    REQUIRE(t.rows.size() == 6);
    CHECK(cell(t, 0, "tau2_se") == doctest::Approx(0.2 + 0.128 / 0.64));
    for (std::size_t k = 0; k < t.rows.size(); ++k)
        CHECK(std::abs(cell(t, k, "tau2_empirical") - cell(t, k, "tau2_se")) < 0.1);
}

TEST_CASE("resampled oracle") {
    auto s = small(ExperimentKind::ResampledOracle);
    s.n = 1000;
    const auto r = run_experiment(s);
    const auto& t = r.tables[0];
    REQUIRE(t.rows.size() == 6);
    const auto se = se_run(s.params, s.alpha, 5, 0.0);
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        CHECK(cell(t, k, "tau2_se_prediction") ==
              doctest::Approx(s.params.delta * (se.tau2_sequence[k] - s.params.sigma2)));
        CHECK(std::abs(cell(t, k, "tau2_empirical") - cell(t, k, "tau2_se_prediction")) < 0.05);
    }
    // Identical start; the rescaled fixed-matrix IST lags well behind SE after one step.
    CHECK(cell(t, 0, "ist_tau2_empirical") == cell(t, 0, "tau2_empirical"));
    CHECK(cell(t, 0, "plain_tau2_empirical") == cell(t, 0, "tau2_empirical"));
    CHECK(cell(t, 1, "ist_tau2_empirical") > cell(t, 1, "tau2_se_prediction") + 0.005);
}

TEST_CASE("phase curve") {
    const auto s = small(ExperimentKind::PhaseCurve);
    const auto r = run_experiment(s);
    REQUIRE(r.tables.size() == 2);
    const auto& b = r.tables[0];
    CHECK(b.header == std::vector<std::string>{"alpha", "delta", "rho", "rho_c"});
    for (std::size_t k = 0; k < b.rows.size(); ++k) {
        const auto [d, rho] = parametric_boundary(cell(b, k, "alpha"));
        CHECK(cell(b, k, "delta") == doctest::Approx(d));
        CHECK(cell(b, k, "rho") == doctest::Approx(rho));
    }
    CHECK(r.tables[1].name == "mstar");
}

TEST_CASE("failed seeds are recorded, not fatal") {
    auto s = small(ExperimentKind::MseVsLambda);
    s.max_iter = 1;
    const auto r = run_experiment(s);
    CHECK(r.tables[0].rows.size() == 2);
    for (const auto& o : r.outcomes) CHECK(o.ok);
}

TEST_CASE("outputs on disk") {
    const auto dir = std::filesystem::temp_directory_path() / "amp_harness_test";
    std::filesystem::create_directories(dir);
    auto s = small(ExperimentKind::Convergence);
    s.max_iter = 50;
    s.out = (dir / "conv.csv").string();
    const auto r = run_experiment(s);
    const auto files = write_outputs(s, r);
    REQUIRE(files.size() == 3);
    CHECK(std::filesystem::exists(dir / "conv.csv"));
    CHECK(std::filesystem::exists(dir / "conv_summary.csv"));
    const auto m = nlohmann::json::parse(read_file((dir / "conv.manifest.json").string()));
    CHECK(m["spec_hash"] == spec_hash(s));
    CHECK(ExperimentSpec::from_json(m["spec"]).to_json() == s.to_json());
    CHECK(m["outcomes"].size() == r.outcomes.size());
    CHECK(read_file((dir / "conv.csv").string()) == r.tables[0].to_csv());
    std::filesystem::remove_all(dir);
}
