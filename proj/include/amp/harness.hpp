#pragma once

// Experiment driver: Monte Carlo sweeps over seeded instances that regenerate
// the data behind the MSE-vs-lambda, convergence, effective-noise, state
// evolution tracking, resampled-matrix and phase-diagram plots.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "amp/amp.hpp"
#include "amp/instance.hpp"
#include "amp/stats.hpp"

namespace amp {

enum class ExperimentKind { MseVsLambda, Convergence, NoiseHistogram, SeTracking, ResampledOracle, PhaseCurve };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::MseVsLambda;
    long n = 1000;
    ModelParams params;
    Ensemble ensemble = Ensemble::Gaussian;
    std::vector<std::uint64_t> seeds{1};
    TauEstimator estimator = TauEstimator::Rms;

    double alpha = 2.0;             // AMP threshold multiplier
    std::vector<double> lambdas;    // MSE_VS_LAMBDA grid
    long max_iter = 1000;
    double tol = 1e-8;

    long iterations = 10;           // t target (histogram, tracking, resampled oracle)
    long nonzeros = 0;              // exact +-1 support size; 0 means sample from the prior
    std::vector<long> sparsity_levels;  // CONVERGENCE
    double ist_alpha = 1.8;
    double ist_opnorm = 0.95;
    double mse_target = 1e-4;
    int histogram_bins = 60;
    int grid = 50;                  // PHASE_CURVE resolution

    int jobs = 1;
    std::string out;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentSpec from_json(const nlohmann::json& j);
};

/// git blob id (SHA-1 of "blob <len>\0<bytes>") of the canonical spec JSON, minus jobs and out.
std::string spec_hash(const ExperimentSpec& spec);

struct Table {
    std::string name;  // suffix used when a runner emits several tables
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
    std::string to_csv() const;
};

std::string fmt_num(double v);
std::string fmt_opt(const std::optional<double>& v);

struct SeedOutcome {
    std::string cell;  // e.g. "lambda=0.5"
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    nlohmann::json data;
};

struct ExperimentResult {
    std::vector<Table> tables;
    std::vector<SeedOutcome> outcomes;
    nlohmann::json summary;
};

/// Runs fn(0..count-1) on up to `jobs` threads. Each index writes only its own slot.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

ExperimentResult run_mse_vs_lambda(const ExperimentSpec& spec);
ExperimentResult run_convergence(const ExperimentSpec& spec);
ExperimentResult run_noise_histogram(const ExperimentSpec& spec);
ExperimentResult run_se_tracking(const ExperimentSpec& spec);
ExperimentResult run_resampled_oracle(const ExperimentSpec& spec);
ExperimentResult run_phase_curve(const ExperimentSpec& spec);

ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Manifest: every knob, the spec hash and per-seed outcomes.
nlohmann::json manifest(const ExperimentSpec& spec, const ExperimentResult& result);

/// Writes each table to `<out>` (first table) or `<stem>_<name>.csv`, plus `<stem>.manifest.json`.
std::vector<std::string> write_outputs(const ExperimentSpec& spec, const ExperimentResult& result);

// Pieces shared with the CLI and the tests.

/// Rows (lambda, predicted_mse, tau_star, theta_star, alpha) from the asymptotic theory.
Table lasso_risk_curve(const std::vector<double>& lambdas, const ModelParams& params);

struct PooledEstimates {
    std::vector<double> amp;
    std::vector<double> ist;
};

/// Un-thresholded estimates (x^t + A^T r^t)_i on coordinates with x0_i = +1, pooled over seeds.
PooledEstimates pooled_unthresholded(const ExperimentSpec& spec);

/// Instance used by the harness for seed index k of a cell.
InstanceXd harness_instance(const ExperimentSpec& spec, Ensemble ensemble, std::uint64_t seed, long nonzeros);

} // namespace amp
