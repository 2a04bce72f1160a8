// amp-lasso: command line front end for the solver, state evolution,
// calibration, phase diagram and the Monte Carlo experiment driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "amp/amp.hpp"
#include "amp/harness.hpp"
#include "amp/mp_core.hpp"
#include "amp/state_evolution.hpp"

namespace {

using nlohmann::json;

constexpr int kExitSpec = 2;
constexpr int kExitNumerical = 3;

struct Common {
    long n = 1000;
    double delta = 0.64;
    double sigma2 = 0.2;
    std::string prior = "atoms=[-1,0,1] weights=[0.064,0.872,0.064]";
    std::optional<double> alpha;
    std::vector<double> lambdas;
    std::string ensemble = "gaussian";
    std::vector<std::uint64_t> seeds{1};
    long max_iter = 1000;
    double tol = 1e-8;
    int jobs = 1;
    std::string out;
    std::string engine = "amp";
    std::string estimator = "rms";

    amp::ModelParams params() const {
        amp::ModelParams p{delta, sigma2, amp::parse_prior(prior)};
        p.validate();
        return p;
    }
};

void add_model_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("--n", c.n, "signal dimension");
    cmd->add_option("--delta", c.delta, "undersampling ratio m/n");
    cmd->add_option("--sigma2", c.sigma2, "noise variance");
    cmd->add_option("--prior", c.prior, "prior, JSON or atoms=[..] weights=[..]");
}

void add_solver_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("--alpha", c.alpha, "threshold multiplier");
    cmd->add_option("--lambda", c.lambdas, "LASSO regularisation (list allowed)")->delimiter(',');
    cmd->add_option("--ensemble", c.ensemble, "gaussian or rademacher");
    cmd->add_option("--seeds", c.seeds, "base seeds")->delimiter(',');
    cmd->add_option("--max-iter", c.max_iter, "iteration cap");
    cmd->add_option("--tol", c.tol, "relative change stopping tolerance");
    cmd->add_option("--estimator", c.estimator, "rms or median");
}

void emit(const std::string& path, const std::string& body) {
    if (path.empty()) {
        std::cout << body;
        return;
    }
    const auto parent = std::filesystem::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream f(path);
    if (!f) throw amp::SpecError("cannot write " + path);
    f << body;
}

std::string stem_of(const std::string& out) {
    if (out.size() > 4 && out.substr(out.size() - 4) == ".csv") return out.substr(0, out.size() - 4);
    return out;
}

amp::TauEstimator estimator_of(const std::string& s) {
    if (s == "rms") return amp::TauEstimator::Rms;
    if (s == "median") return amp::TauEstimator::Median;
    throw amp::SpecError("unknown estimator '" + s + "'");
}

// ---------------------------------------------------------------------------

int cmd_solve(const Common& c, bool track_kkt) {
    const auto params = c.params();
    const auto inst = amp::gen_instance<double>(amp::parse_ensemble(c.ensemble), c.n, params, c.seeds.front());
    json report{{"engine", c.engine}, {"n", inst.n}, {"m", inst.m}, {"seed", c.seeds.front()}};
    Eigen::VectorXd x_hat;
    double lambda = 0.0;
    amp::Table trace{"trajectory", {"t", "tau_hat", "theta", "b", "mse", "kkt_gap"}, {}};

    if (c.engine == "mp") {
        amp::require(c.lambdas.size() == 1, "solve --engine=mp needs exactly one --lambda");
        lambda = c.lambdas.front();
        const auto msgs = amp::quad_mp_run(inst, lambda, static_cast<int>(c.max_iter));
        x_hat = amp::mp_estimate(msgs, inst, lambda);
        report["iterations"] = c.max_iter;
    } else {
        double alpha;
        if (!c.lambdas.empty()) {
            amp::require(c.lambdas.size() == 1, "solve takes a single --lambda");
            alpha = amp::alpha_of_lambda(c.lambdas.front(), params);
        } else {
            amp::require(c.alpha.has_value(), "solve needs --alpha or --lambda");
            alpha = *c.alpha;
        }
        const amp::ThresholdPolicy policy{alpha, estimator_of(c.estimator), {}};
        const amp::RunOptions opts{c.max_iter, c.tol, true, track_kkt};
        const auto res = c.engine == "amp"   ? amp::amp_run(inst, policy, opts)
                         : c.engine == "ist" ? amp::ist_run(inst, policy, opts, 0.95)
                                             : throw amp::SpecError("unknown engine '" + c.engine + "'");
        x_hat = res.x_hat;
        lambda = res.lambda_effective();
        for (const auto& row : res.trajectory)
            trace.add({std::to_string(row.t), amp::fmt_num(row.tau_hat), amp::fmt_num(row.theta), amp::fmt_num(row.b),
                       amp::fmt_opt(row.mse), amp::fmt_opt(row.kkt_gap)});
        report["alpha"] = alpha;
        report["iterations"] = res.iterations;
        report["converged"] = res.converged;
        report["theta_final"] = res.final_state.theta;
        if (!c.engine.empty() && c.engine == "ist") report["scale"] = res.scale;
    }
    report["lambda"] = lambda;
    report["nonzeros"] = amp::count_nonzero(x_hat);
    report["mse"] = (x_hat - inst.x0).squaredNorm() / static_cast<double>(inst.n);
    report["x_hat_l1"] = x_hat.lpNorm<1>();
    report["x_hat_max_abs"] = x_hat.lpNorm<Eigen::Infinity>();
    report["lasso_objective"] = amp::lasso_objective(inst, x_hat, lambda);
    report["kkt_gap"] = amp::lasso_kkt_gap(inst, x_hat, lambda);
    if (!std::isfinite(report["mse"].get<double>())) throw amp::NumericalError("solve: non-finite estimate");

    if (!c.out.empty()) {
        amp::Table est{"", {"i", "x_hat", "x0"}, {}};
        for (Eigen::Index i = 0; i < inst.n; ++i)
            est.add({std::to_string(i), amp::fmt_num(x_hat[i]), amp::fmt_num(inst.x0[i])});
        const std::string stem = stem_of(c.out);
        emit(stem + ".csv", est.to_csv());
        if (!trace.rows.empty()) emit(stem + "_trajectory.csv", trace.to_csv());
        emit(stem + ".manifest.json", json{{"command", "solve"}, {"prior", json::parse(amp::to_json(params.prior))},
                                           {"delta", c.delta}, {"sigma2", c.sigma2}, {"ensemble", c.ensemble},
                                           {"max_iter", c.max_iter}, {"tol", c.tol}, {"report", report}}
                                              .dump(2) + "\n");
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_se(const Common& c) {
    const auto params = c.params();
    amp::require(c.alpha.has_value(), "se needs --alpha");
    const auto traj = amp::se_run(params, *c.alpha, static_cast<int>(c.max_iter), c.tol);
    amp::Table t{"", {"t", "tau2", "theta"}, {}};
    for (std::size_t k = 0; k < traj.tau2_sequence.size(); ++k)
        t.add({std::to_string(k), amp::fmt_num(traj.tau2_sequence[k]),
               k < traj.theta_sequence.size() ? amp::fmt_num(traj.theta_sequence[k]) : std::string()});
    emit(c.out, t.to_csv());
    json summary{{"alpha", *c.alpha}, {"converged", traj.converged}, {"alpha_min", amp::alpha_min(std::min(1.0, c.delta))}};
    if (c.sigma2 > 0.0 && c.delta <= 1.0 && *c.alpha > amp::alpha_min(c.delta)) {
        const double tau = amp::se_fixed_point(params, *c.alpha);
        summary["tau_star"] = tau;
        summary["predicted_mse"] = c.delta * (tau * tau - c.sigma2);
    } else if (traj.tau_star) {
        summary["tau_star"] = *traj.tau_star;
    }
    std::cerr << summary.dump() << "\n";
    if (!traj.converged) {
        std::cerr << "numerical failure: state evolution did not settle within --max-iter\n";
        return 3;
    }
    return 0;
}

int cmd_calibrate(const Common& c) {
    const auto params = c.params();
    amp::Table t{"", {"alpha", "lambda", "tau_star", "theta_star", "predicted_mse"}, {}};
    auto row = [&](double alpha, double lambda) {
        const double tau = amp::se_fixed_point(params, alpha);
        t.add({amp::fmt_num(alpha), amp::fmt_num(lambda), amp::fmt_num(tau), amp::fmt_num(alpha * tau),
               amp::fmt_num(c.delta * (tau * tau - c.sigma2))});
    };
    if (!c.lambdas.empty()) {
        for (double lambda : c.lambdas) row(amp::alpha_of_lambda(lambda, params), lambda);
    } else {
        amp::require(c.alpha.has_value(), "calibrate needs --alpha or --lambda");
        row(*c.alpha, amp::calibrate_lambda(*c.alpha, params));
    }
    emit(c.out, t.to_csv());
    return 0;
}

int cmd_phase(const Common& c, int grid, const std::vector<double>& deltas) {
    if (!deltas.empty()) {
        amp::Table t{"", {"delta", "rho_c", "alpha"}, {}};
        for (double d : deltas) {
            amp::require(d > 0.0 && d < 1.0, "phase: delta must lie in (0,1)");
            t.add({amp::fmt_num(d), amp::fmt_num(amp::rho_c(d)), amp::fmt_num(amp::boundary_alpha(d))});
        }
        emit(c.out, t.to_csv());
        return 0;
    }
    amp::ExperimentSpec spec;
    spec.kind = amp::ExperimentKind::PhaseCurve;
    spec.grid = grid;
    spec.out = c.out;
    const auto result = amp::run_phase_curve(spec);
    if (c.out.empty())
        std::cout << result.tables.front().to_csv();
    else
        amp::write_outputs(spec, result);
    return 0;
}

struct ExperimentFlags {
    std::string spec_file;
    std::string kind;
    long iterations = -1;
    long nonzeros = -1;
    std::vector<long> sparsity_levels;
    double ist_alpha = -1;
    double ist_opnorm = -1;
    double mse_target = -1;
    int bins = -1;
    int grid = -1;
};

int cmd_experiment(const Common& c, const ExperimentFlags& f, const CLI::App& sub) {
    amp::ExperimentSpec spec;
    nlohmann::json j = nlohmann::json::object();
    if (!f.spec_file.empty()) {
        std::ifstream in(f.spec_file);
        if (!in) throw amp::SpecError("cannot read " + f.spec_file);
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw amp::SpecError(std::string("spec file: ") + e.what());
        }
        // A manifest replays its own spec.
        if (j.is_object() && j.contains("spec") && j.contains("spec_hash")) j = nlohmann::json(j["spec"]);
    }
    // Explicit flags override the file.
    auto set = [&](const char* flag, const char* key, auto value) {
        if (sub.count(flag) > 0) j[key] = value;
    };
    set("--kind", "kind", f.kind);
    set("--n", "n", c.n);
    set("--delta", "delta", c.delta);
    set("--sigma2", "sigma2", c.sigma2);
    set("--prior", "prior", c.prior);
    if (c.alpha) set("--alpha", "alpha", *c.alpha);
    set("--lambda", "lambdas", c.lambdas);
    set("--ensemble", "ensemble", c.ensemble);
    set("--seeds", "seeds", c.seeds);
    set("--max-iter", "max_iter", c.max_iter);
    set("--tol", "tol", c.tol);
    set("--jobs", "jobs", c.jobs);
    set("--out", "out", c.out);
    set("--estimator", "estimator", c.estimator);
    set("--iterations", "iterations", f.iterations);
    set("--nonzeros", "nonzeros", f.nonzeros);
    set("--sparsity-levels", "sparsity_levels", f.sparsity_levels);
    set("--ist-alpha", "ist_alpha", f.ist_alpha);
    set("--ist-opnorm", "ist_opnorm", f.ist_opnorm);
    set("--mse-target", "mse_target", f.mse_target);
    set("--bins", "histogram_bins", f.bins);
    set("--grid", "grid", f.grid);
    if (!j.contains("kind")) throw amp::SpecError("experiment needs --kind or a spec file with \"kind\"");
    if (!j.contains("prior") && sub.count("--prior") == 0) j["prior"] = c.prior;
    if (!j.contains("delta")) j["delta"] = c.delta;
    if (!j.contains("sigma2")) j["sigma2"] = c.sigma2;
    spec = amp::ExperimentSpec::from_json(j);

    const auto result = amp::run_experiment(spec);
    if (spec.out.empty()) {
        std::cout << result.tables.front().to_csv();
        std::cerr << amp::manifest(spec, result).dump(2) << "\n";
    } else {
        for (const auto& path : amp::write_outputs(spec, result)) std::cerr << "wrote " << path << "\n";
    }
    long failed = 0;
    for (const auto& o : result.outcomes) failed += o.ok ? 0 : 1;
    if (failed > 0) std::cerr << failed << " seed(s) failed; see manifest\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"AMP for the LASSO: solver, state evolution, calibration and experiments"};
    app.require_subcommand(1);
    Common c;
    ExperimentFlags f;
    bool track_kkt = false;
    int grid = 50;
    std::vector<double> phase_deltas;

    auto* solve = app.add_subcommand("solve", "solve one seeded instance and print a summary with the KKT gap");
    add_model_flags(solve, c);
    add_solver_flags(solve, c);
    solve->add_option("--engine", c.engine, "amp, ist or mp")->check(CLI::IsMember({"amp", "ist", "mp"}));
    solve->add_option("--out", c.out, "write estimate CSV, trajectory CSV and manifest");
    solve->add_flag("--track-kkt", track_kkt, "record the KKT gap at every iteration");

    auto* se = app.add_subcommand("se", "state evolution trajectory and fixed point");
    add_model_flags(se, c);
    se->add_option("--alpha", c.alpha, "threshold multiplier")->required();
    se->add_option("--max-iter", c.max_iter, "iteration cap");
    se->add_option("--tol", c.tol, "stopping tolerance on tau^2");
    se->add_option("--out", c.out, "CSV path (default stdout)");

    auto* cal = app.add_subcommand("calibrate", "map alpha to lambda or lambda to alpha");
    add_model_flags(cal, c);
    cal->add_option("--alpha", c.alpha, "threshold multiplier");
    cal->add_option("--lambda", c.lambdas, "LASSO regularisation (list allowed)")->delimiter(',');
    cal->add_option("--out", c.out, "CSV path (default stdout)");

    auto* phase = app.add_subcommand("phase", "noise sensitivity boundary and M* grid");
    phase->add_option("--grid", grid, "resolution")->check(CLI::Range(2, 100000));
    phase->add_option("--delta", phase_deltas, "report rho_c and alpha at these deltas")->delimiter(',');
    phase->add_option("--out", c.out, "CSV path stem (default stdout)");

    auto* exp = app.add_subcommand("experiment", "run a Monte Carlo experiment from a JSON spec or flags");
    add_model_flags(exp, c);
    add_solver_flags(exp, c);
    exp->add_option("--spec", f.spec_file, "JSON experiment spec");
    exp->add_option("--kind", f.kind,
                    "mse_vs_lambda, convergence, noise_histogram, se_tracking, resampled_oracle or phase_curve");
    exp->add_option("--jobs", c.jobs, "worker threads");
    exp->add_option("--out", c.out, "CSV path; siblings and the manifest share its stem");
    exp->add_option("--iterations", f.iterations, "iteration target t");
    exp->add_option("--nonzeros", f.nonzeros, "exact number of +-1 entries (0 samples the prior)");
    exp->add_option("--sparsity-levels", f.sparsity_levels, "nonzero counts for convergence runs")->delimiter(',');
    exp->add_option("--ist-alpha", f.ist_alpha, "IST threshold multiplier");
    exp->add_option("--ist-opnorm", f.ist_opnorm, "IST rescaled operator norm");
    exp->add_option("--mse-target", f.mse_target, "MSE level for iteration counts");
    exp->add_option("--bins", f.bins, "histogram bins");
    exp->add_option("--grid", f.grid, "phase grid resolution");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitSpec;
    }

    try {
        if (*solve) return cmd_solve(c, track_kkt);
        if (*se) return cmd_se(c);
        if (*cal) return cmd_calibrate(c);
        if (*phase) return cmd_phase(c, grid, phase_deltas);
        if (*exp) return cmd_experiment(c, f, *exp);
    } catch (const amp::SpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSpec;
    } catch (const amp::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
