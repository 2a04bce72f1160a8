#include "amp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/uuid/detail/sha1.hpp>

#include "amp/state_evolution.hpp"

namespace amp {

using nlohmann::json;

namespace {

struct KindName {
    ExperimentKind kind;
    const char* name;
};
constexpr KindName kKinds[] = {{ExperimentKind::MseVsLambda, "mse_vs_lambda"},
                               {ExperimentKind::Convergence, "convergence"},
                               {ExperimentKind::NoiseHistogram, "noise_histogram"},
                               {ExperimentKind::SeTracking, "se_tracking"},
                               {ExperimentKind::ResampledOracle, "resampled_oracle"},
                               {ExperimentKind::PhaseCurve, "phase_curve"}};

std::uint64_t key_of(double v) { return std::bit_cast<std::uint64_t>(v); }

std::string estimator_name(TauEstimator e) { return e == TauEstimator::Rms ? "rms" : "median"; }

TauEstimator parse_estimator(const std::string& s) {
    if (s == "rms") return TauEstimator::Rms;
    if (s == "median") return TauEstimator::Median;
    throw SpecError("unknown tau estimator '" + s + "' (expected rms or median)");
}

ThresholdPolicy policy_for(double alpha, TauEstimator estimator) {
    ThresholdPolicy p{alpha, estimator, {}};
    p.validate();
    return p;
}

} // namespace

std::string to_string(ExperimentKind kind) {
    for (const auto& k : kKinds)
        if (k.kind == kind) return k.name;
    return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& k : kKinds)
        if (lower == k.name) return k.kind;
    throw SpecError("unknown experiment kind '" + name + "'");
}

void ExperimentSpec::validate() const {
    params.validate();
    require(!seeds.empty(), "experiment: seeds must be nonempty");
    require(n >= 2, "experiment: n must be >= 2");
    require(measurements_for(n, params.delta) >= 1, "experiment: round(delta n) must be >= 1");
    require(alpha > 0.0, "experiment: alpha must be positive");
    require(max_iter >= 1, "experiment: max_iter must be >= 1");
    require(tol > 0.0, "experiment: tol must be positive");
    require(jobs >= 1, "experiment: jobs must be >= 1");
    require(nonzeros >= 0 && nonzeros <= n, "experiment: nonzeros must lie in [0, n]");
    for (double l : lambdas) require(l > 0.0, "experiment: lambda grid values must be positive");
    switch (kind) {
    case ExperimentKind::MseVsLambda:
        require(!lambdas.empty(), "mse_vs_lambda: lambda grid is empty");
        require(params.sigma2 > 0.0, "mse_vs_lambda: sigma2 must be positive");
        break;
    case ExperimentKind::Convergence:
        require(params.sigma2 == 0.0, "convergence: protocol is noiseless (sigma2 = 0)");
        require(!sparsity_levels.empty(), "convergence: sparsity_levels is empty");
        for (long k : sparsity_levels) require(k >= 0 && k <= n, "convergence: sparsity level out of range");
        require(ist_opnorm > 0.0 && ist_opnorm <= 1.0, "convergence: ist_opnorm must lie in (0,1]");
        break;
    case ExperimentKind::NoiseHistogram:
        require(iterations >= 1, "noise_histogram: iteration target must be >= 1");
        require(ist_opnorm > 0.0 && ist_opnorm <= 1.0, "noise_histogram: ist_opnorm must lie in (0,1]");
        require(histogram_bins >= 1, "noise_histogram: bins must be >= 1");
        break;
    case ExperimentKind::SeTracking:
        require(iterations >= 1, "iteration budget must be >= 1");
        break;
    case ExperimentKind::ResampledOracle:
        require(iterations >= 1, "iteration budget must be >= 1");
        require(ist_opnorm > 0.0 && ist_opnorm <= 1.0, "resampled_oracle: ist_opnorm must lie in (0,1]");
        break;
    case ExperimentKind::PhaseCurve:
        require(grid >= 2, "phase_curve: grid must be >= 2");
        break;
    }
}

json ExperimentSpec::to_json() const {
    return json{{"kind", to_string(kind)},
                {"n", n},
                {"delta", params.delta},
                {"sigma2", params.sigma2},
                {"prior", {{"atoms", params.prior.atoms}, {"weights", params.prior.weights}}},
                {"ensemble", to_string(ensemble)},
                {"seeds", seeds},
                {"estimator", estimator_name(estimator)},
                {"alpha", alpha},
                {"lambdas", lambdas},
                {"max_iter", max_iter},
                {"tol", tol},
                {"iterations", iterations},
                {"nonzeros", nonzeros},
                {"sparsity_levels", sparsity_levels},
                {"ist_alpha", ist_alpha},
                {"ist_opnorm", ist_opnorm},
                {"mse_target", mse_target},
                {"histogram_bins", histogram_bins},
                {"grid", grid},
                {"jobs", jobs},
                {"out", out}};
}

ExperimentSpec ExperimentSpec::from_json(const json& j) {
    ExperimentSpec s;
    try {
        s.kind = parse_kind(j.at("kind").get<std::string>());
        s.n = j.value("n", s.n);
        s.params.delta = j.value("delta", s.params.delta);
        s.params.sigma2 = j.value("sigma2", s.params.sigma2);
        if (j.contains("prior")) {
            const auto& p = j.at("prior");
            s.params.prior = p.is_string() ? parse_prior(p.get<std::string>())
                                           : DiscretePrior::make(p.at("atoms").get<std::vector<double>>(),
                                                                 p.at("weights").get<std::vector<double>>());
        }
        s.ensemble = parse_ensemble(j.value("ensemble", to_string(s.ensemble)));
        s.seeds = j.value("seeds", s.seeds);
        s.estimator = parse_estimator(j.value("estimator", estimator_name(s.estimator)));
        s.alpha = j.value("alpha", s.alpha);
        s.lambdas = j.value("lambdas", s.lambdas);
        s.max_iter = j.value("max_iter", s.max_iter);
        s.tol = j.value("tol", s.tol);
        s.iterations = j.value("iterations", s.iterations);
        s.nonzeros = j.value("nonzeros", s.nonzeros);
        s.sparsity_levels = j.value("sparsity_levels", s.sparsity_levels);
        s.ist_alpha = j.value("ist_alpha", s.ist_alpha);
        s.ist_opnorm = j.value("ist_opnorm", s.ist_opnorm);
        s.mse_target = j.value("mse_target", s.mse_target);
        s.histogram_bins = j.value("histogram_bins", s.histogram_bins);
        s.grid = j.value("grid", s.grid);
        s.jobs = j.value("jobs", s.jobs);
        s.out = j.value("out", s.out);
    } catch (const json::exception& e) {
        throw SpecError(std::string("experiment spec: ") + e.what());
    }
    s.validate();
    return s;
}

std::string spec_hash(const ExperimentSpec& spec) {
    // Execution knobs (threads, output path) do not change the numbers.
    json j = spec.to_json();
    j.erase("jobs");
    j.erase("out");
    const std::string body = j.dump();
    const std::string blob = "blob " + std::to_string(body.size()) + std::string(1, '\0') + body;
    boost::uuids::detail::sha1 sha;
    sha.process_bytes(blob.data(), blob.size());
    boost::uuids::detail::sha1::digest_type digest;
    sha.get_digest(digest);
    char buf[41];
    for (int i = 0; i < 5; ++i) std::snprintf(buf + 8 * i, 9, "%08x", digest[i]);
    return std::string(buf, 40);
}

std::string fmt_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : std::string(); }

std::string Table::to_csv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << '\n';
    }
    return os.str();
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

InstanceXd harness_instance(const ExperimentSpec& spec, Ensemble ensemble, std::uint64_t seed, long nonzeros) {
    if (nonzeros <= 0) return gen_instance<double>(ensemble, spec.n, spec.params, seed);
    const InstanceSeeds seeds(seed);
    const Eigen::Index m = measurements_for(spec.n, spec.params.delta);
    require(m >= 1, "harness_instance: round(delta n) must be >= 1");
    return assemble_instance<double>(sensing_matrix<double>(ensemble, m, spec.n, seeds.matrix),
                                     sparse_sign_signal(spec.n, nonzeros, seeds.signal), spec.params.sigma2,
                                     seeds.noise, seed);
}

Table lasso_risk_curve(const std::vector<double>& lambdas, const ModelParams& params) {
    Table t{"", {"lambda", "predicted_mse", "tau_star", "theta_star", "alpha"}, {}};
    for (double lambda : lambdas) {
        const LassoRisk r = lasso_risk(lambda, params);
        t.add({fmt_num(lambda), fmt_num(r.mse_per_coord), fmt_num(r.tau_star), fmt_num(r.theta_star), fmt_num(r.alpha)});
    }
    return t;
}

// ---------------------------------------------------------------------------

ExperimentResult run_mse_vs_lambda(const ExperimentSpec& spec) {
    spec.validate();
    struct Cell {
        double lambda, alpha, tau_star, predicted;
    };
    std::vector<Cell> cells;
    for (double lambda : spec.lambdas) {
        // SE directly (no prior guard) so a zero-signal prior is a legal sanity lane.
        const double alpha = alpha_of_lambda(lambda, spec.params);
        const double tau = se_fixed_point(spec.params, alpha);
        cells.push_back({lambda, alpha, tau, spec.params.delta * (tau * tau - spec.params.sigma2)});
    }

    const std::size_t per_cell = spec.seeds.size();
    std::vector<SeedOutcome> outcomes(cells.size() * per_cell);
    parallel_for(outcomes.size(), spec.jobs, [&](std::size_t idx) {
        const Cell& cell = cells[idx / per_cell];
        const std::uint64_t seed =
            derive_seed(spec.seeds[idx % per_cell], {key_of(cell.lambda), static_cast<std::uint64_t>(spec.ensemble)});
        SeedOutcome& out = outcomes[idx];
        out.cell = "lambda=" + fmt_num(cell.lambda);
        out.seed = seed;
        try {
            const InstanceXd inst = harness_instance(spec, spec.ensemble, seed, spec.nonzeros);
            RunOptions opts{spec.max_iter, spec.tol, false, false};
            const auto res = amp_run(inst, policy_for(cell.alpha, spec.estimator), opts);
            const double mse = (res.x_hat - inst.x0).squaredNorm() / static_cast<double>(inst.n);
            out.data = {{"lambda", cell.lambda}, {"mse", mse}, {"iterations", res.iterations},
                        {"converged", res.converged}};
            try {
                out.data["lambda_eff"] = res.lambda_effective();
            } catch (const SpecError&) {
                out.data["lambda_eff"] = nullptr;
            }
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
    });

    ExperimentResult result;
    Table t{"", {"lambda", "n", "ensemble", "empirical_mse_mean", "empirical_mse_se", "predicted_mse", "alpha", "tau_star",
                 "lambda_eff_mean", "seeds_ok", "seeds_failed"},
            {}};
    for (std::size_t c = 0; c < cells.size(); ++c) {
        std::vector<double> mses, lams;
        long failed = 0;
        for (std::size_t k = 0; k < per_cell; ++k) {
            const auto& o = outcomes[c * per_cell + k];
            if (!o.ok) {
                ++failed;
                continue;
            }
            mses.push_back(o.data["mse"].get<double>());
            if (!o.data["lambda_eff"].is_null()) lams.push_back(o.data["lambda_eff"].get<double>());
        }
        const auto s = stats::summarize(mses);
        const auto l = stats::summarize(lams);
        t.add({fmt_num(cells[c].lambda), std::to_string(spec.n), to_string(spec.ensemble), fmt_num(s.mean),
               fmt_num(s.se), fmt_num(cells[c].predicted), fmt_num(cells[c].alpha), fmt_num(cells[c].tau_star),
               fmt_num(l.mean), std::to_string(mses.size()), std::to_string(failed)});
    }
    result.tables.push_back(std::move(t));
    result.outcomes = std::move(outcomes);
    return result;
}

ExperimentResult run_convergence(const ExperimentSpec& spec) {
    spec.validate();
    struct Task {
        long level;
        std::size_t seed_index;
    };
    std::vector<Task> tasks;
    for (long level : spec.sparsity_levels)
        for (std::size_t k = 0; k < spec.seeds.size(); ++k) tasks.push_back({level, k});

    struct Trace {
        std::vector<double> amp, ist;
        std::string ist_error;
    };
    std::vector<Trace> traces(tasks.size());
    std::vector<SeedOutcome> outcomes(tasks.size());
    parallel_for(tasks.size(), spec.jobs, [&](std::size_t idx) {
        const Task& task = tasks[idx];
        const std::uint64_t seed = derive_seed(spec.seeds[task.seed_index], {static_cast<std::uint64_t>(task.level)});
        SeedOutcome& out = outcomes[idx];
        out.cell = "nonzeros=" + std::to_string(task.level);
        out.seed = seed;
        try {
            const InstanceXd inst = harness_instance(spec, spec.ensemble, seed, task.level);
            RunOptions opts{spec.max_iter, spec.tol, true, false};
            auto collect = [](const SolverResult<double>& r) {
                std::vector<double> v;
                for (const auto& row : r.trajectory) v.push_back(*row.mse);
                return v;
            };
            traces[idx].amp = collect(amp_run(inst, policy_for(spec.alpha, spec.estimator), opts));
            try {
                traces[idx].ist = collect(ist_run(inst, policy_for(spec.ist_alpha, spec.estimator), opts, spec.ist_opnorm));
            } catch (const NumericalError& e) {
                traces[idx].ist_error = e.what();
            }
            auto first_below = [&](const std::vector<double>& v) -> json {
                for (std::size_t t = 0; t < v.size(); ++t)
                    if (v[t] <= spec.mse_target) return static_cast<long>(t);
                return nullptr;
            };
            out.data = {{"nonzeros", task.level},
                        {"amp_iterations_to_target", first_below(traces[idx].amp)},
                        {"ist_iterations_to_target", first_below(traces[idx].ist)},
                        {"amp_final_mse", traces[idx].amp.back()},
                        {"ist_final_mse", traces[idx].ist.empty() ? json(nullptr) : json(traces[idx].ist.back())},
                        {"ist_error", traces[idx].ist_error}};
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
    });

    ExperimentResult result;
    Table t{"", {"t", "engine", "nonzeros", "seed", "mse"}, {}};
    Table summary{"summary", {"nonzeros", "seed", "amp_iterations_to_target", "ist_iterations_to_target", "ratio"}, {}};
    for (std::size_t idx = 0; idx < tasks.size(); ++idx) {
        const auto level = std::to_string(tasks[idx].level);
        const auto seed = std::to_string(outcomes[idx].seed);
        for (std::size_t k = 0; k < traces[idx].amp.size(); ++k)
            t.add({std::to_string(k), "AMP", level, seed, fmt_num(traces[idx].amp[k])});
        for (std::size_t k = 0; k < traces[idx].ist.size(); ++k)
            t.add({std::to_string(k), "IST", level, seed, fmt_num(traces[idx].ist[k])});
        if (!outcomes[idx].ok) continue;
        const auto& d = outcomes[idx].data;
        auto cell = [](const json& v) { return v.is_null() ? std::string() : std::to_string(v.get<long>()); };
        std::string ratio;
        if (!d["amp_iterations_to_target"].is_null() && !d["ist_iterations_to_target"].is_null())
            ratio = fmt_num(d["ist_iterations_to_target"].get<double>() /
                            std::max(1.0, d["amp_iterations_to_target"].get<double>()));
        summary.add({level, seed, cell(d["amp_iterations_to_target"]), cell(d["ist_iterations_to_target"]), ratio});
    }
    result.tables.push_back(std::move(t));
    result.tables.push_back(std::move(summary));
    result.outcomes = std::move(outcomes);
    return result;
}

PooledEstimates pooled_unthresholded(const ExperimentSpec& spec) {
    std::vector<PooledEstimates> per_seed(spec.seeds.size());
    parallel_for(spec.seeds.size(), spec.jobs, [&](std::size_t k) {
        const InstanceXd inst = harness_instance(spec, spec.ensemble, spec.seeds[k], spec.nonzeros);
        auto pool = [&](const Eigen::VectorXd& u, std::vector<double>& dst) {
            for (Eigen::Index i = 0; i < inst.n; ++i)
                if (inst.x0[i] == 1.0) dst.push_back(u[i]);
        };
        // t + 1 sweeps: the last one forms x^t + A^T r^t.
        const auto amp_policy = policy_for(spec.alpha, spec.estimator);
        auto s = AmpState<double>::initial(inst);
        for (long t = 0; t <= spec.iterations; ++t) s = amp_step(s, inst, amp_policy);
        pool(s.u, per_seed[k].amp);

        const auto ist_policy = policy_for(spec.ist_alpha, spec.estimator);
        const double c = spec.ist_opnorm / operator_norm(inst.a);
        auto q = AmpState<double>::initial(inst);
        for (long t = 0; t <= spec.iterations; ++t) q = ist_step(q, inst, ist_policy, c);
        pool(q.u, per_seed[k].ist);
    });
    PooledEstimates all;
    for (auto& p : per_seed) {
        all.amp.insert(all.amp.end(), p.amp.begin(), p.amp.end());
        all.ist.insert(all.ist.end(), p.ist.begin(), p.ist.end());
    }
    return all;
}

ExperimentResult run_noise_histogram(const ExperimentSpec& spec) {
    spec.validate();
    const PooledEstimates pooled = pooled_unthresholded(spec);
    ExperimentResult result;
    Table hist{"", {"engine", "bin_center", "count"}, {}};
    Table summary{"summary", {"engine", "count", "mean", "sd", "se", "ks_statistic", "ks_p_value"}, {}};
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto* v : {&pooled.amp, &pooled.ist})
        for (double x : *v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    for (const auto& [name, values] : {std::pair{"AMP", &pooled.amp}, std::pair{"IST", &pooled.ist}}) {
        const auto s = stats::summarize(*values);
        stats::KsResult ks;
        if (s.sd > 0.0) ks = stats::ks_normal(*values, s.mean, s.sd);
        const auto h = stats::histogram(*values, lo, hi, spec.histogram_bins);
        for (std::size_t b = 0; b < h.centers.size(); ++b)
            hist.add({name, fmt_num(h.centers[b]), std::to_string(h.counts[b])});
        summary.add({name, std::to_string(s.count), fmt_num(s.mean), fmt_num(s.sd), fmt_num(s.se),
                     fmt_num(ks.statistic), fmt_num(ks.p_value)});
        result.summary[name] = {{"count", s.count}, {"mean", s.mean}, {"sd", s.sd}, {"se", s.se},
                                {"ks_statistic", ks.statistic}, {"ks_p_value", ks.p_value}};
    }
    for (auto seed : spec.seeds) result.outcomes.push_back({"pooled", seed, true, "", json::object()});
    result.tables.push_back(std::move(hist));
    result.tables.push_back(std::move(summary));
    return result;
}

ExperimentResult run_se_tracking(const ExperimentSpec& spec) {
    spec.validate();
    const auto se = se_run(spec.params, spec.alpha, static_cast<int>(spec.iterations), 0.0);
    const std::size_t steps = static_cast<std::size_t>(spec.iterations) + 1;
    std::vector<std::vector<double>> errors(spec.seeds.size()), tau_hats(spec.seeds.size());
    std::vector<SeedOutcome> outcomes(spec.seeds.size());
    parallel_for(spec.seeds.size(), spec.jobs, [&](std::size_t k) {
        outcomes[k].cell = "tracking";
        outcomes[k].seed = spec.seeds[k];
        try {
            const InstanceXd inst = harness_instance(spec, spec.ensemble, spec.seeds[k], spec.nonzeros);
            const auto policy = policy_for(spec.alpha, spec.estimator);
            auto s = AmpState<double>::initial(inst);
            for (std::size_t t = 0; t < steps; ++t) {
                s = amp_step(s, inst, policy);
                errors[k].push_back((s.u - inst.x0).squaredNorm() / static_cast<double>(inst.n));
                tau_hats[k].push_back(s.tau_hat * s.tau_hat);
            }
        } catch (const std::exception& e) {
            outcomes[k].ok = false;
            outcomes[k].error = e.what();
        }
    });
    ExperimentResult result;
    Table t{"", {"t", "tau2_empirical", "tau2_empirical_se", "tau_hat2_mean", "tau2_se", "seeds_ok"}, {}};
    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<double> e, th;
        for (std::size_t k = 0; k < spec.seeds.size(); ++k)
            if (outcomes[k].ok) {
                e.push_back(errors[k][step]);
                th.push_back(tau_hats[k][step]);
            }
        const auto s = stats::summarize(e);
        const double predicted = step < se.tau2_sequence.size() ? se.tau2_sequence[step] : se.tau2_sequence.back();
        t.add({std::to_string(step), fmt_num(s.mean), fmt_num(s.se), fmt_num(stats::summarize(th).mean),
               fmt_num(predicted), std::to_string(e.size())});
    }
    result.tables.push_back(std::move(t));
    result.outcomes = std::move(outcomes);
    return result;
}

ExperimentResult run_resampled_oracle(const ExperimentSpec& spec) {
    spec.validate();
    const auto se = se_run(spec.params, spec.alpha, static_cast<int>(spec.iterations), 0.0);
    const std::size_t steps = static_cast<std::size_t>(spec.iterations) + 1;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const std::size_t count = spec.seeds.size();
    std::vector<std::vector<double>> resampled(count), ist(count), plain(count), fixed_amp(count);
    std::vector<SeedOutcome> outcomes(spec.seeds.size());
    parallel_for(spec.seeds.size(), spec.jobs, [&](std::size_t k) {
        const std::uint64_t seed = spec.seeds[k];
        outcomes[k].cell = "resampled";
        outcomes[k].seed = seed;
        const InstanceXd inst = harness_instance(spec, Ensemble::Gaussian, seed, spec.nonzeros);
        const double n = static_cast<double>(inst.n);
        const auto policy = policy_for(spec.alpha, spec.estimator);

        // Fresh A(t) at every step, y^t = A(t) x0 + w, no memory term.
        Eigen::VectorXd x = Eigen::VectorXd::Zero(inst.n);
        for (std::size_t t = 0; t < steps; ++t) {
            resampled[k].push_back((x - inst.x0).squaredNorm() / n);
            if (t + 1 == steps) break;
            const Eigen::MatrixXd a = sensing_matrix<double>(Ensemble::Gaussian, inst.m, inst.n,
                                                             derive_seed(seed, {0x5eed, static_cast<std::uint64_t>(t)}));
            const Eigen::VectorXd r = a * (inst.x0 - x) + inst.w;
            const double theta = policy.theta(static_cast<long>(t), estimate_tau(r, policy.estimator));
            x = soft_threshold((x + a.transpose() * r).eval(), theta);
        }

        // Fixed matrix: AMP, IST on the rescaled problem, and the unscaled
        // iteration without the Onsager term.
        const double c = spec.ist_opnorm / operator_norm(inst.a);
        auto trace = [&](bool onsager, double scale, std::vector<double>& dst) {
            auto s = AmpState<double>::initial(inst);
            dst.push_back((s.x - inst.x0).squaredNorm() / n);
            try {
                for (std::size_t t = 1; t < steps; ++t) {
                    s = onsager ? amp_step(s, inst, policy) : ist_step(s, inst, policy, scale);
                    dst.push_back((s.x - inst.x0).squaredNorm() / n);
                }
            } catch (const NumericalError&) {
                dst.resize(steps, nan);
            }
        };
        trace(false, c, ist[k]);
        trace(false, 1.0, plain[k]);
        trace(true, 1.0, fixed_amp[k]);
    });

    ExperimentResult result;
    Table t{"",
            {"t", "tau2_empirical", "tau2_empirical_se", "tau2_se_prediction", "ist_tau2_empirical", "ist_tau2_se",
             "plain_tau2_empirical", "plain_tau2_se", "amp_tau2_empirical", "amp_tau2_se"},
            {}};
    for (std::size_t step = 0; step < steps; ++step) {
        const double tau2 = se.tau2_sequence[std::min(step, se.tau2_sequence.size() - 1)];
        std::vector<std::string> row{std::to_string(step)};
        for (const auto* traces : {&resampled, &ist, &plain, &fixed_amp}) {
            std::vector<double> v;
            for (std::size_t k = 0; k < count; ++k) v.push_back((*traces)[k][step]);
            const auto sum = stats::summarize(v);
            row.push_back(fmt_num(sum.mean));
            row.push_back(fmt_num(sum.se));
            if (traces == &resampled) row.push_back(fmt_num(spec.params.delta * (tau2 - spec.params.sigma2)));
        }
        t.add(std::move(row));
    }
    result.tables.push_back(std::move(t));
    result.outcomes = std::move(outcomes);
    return result;
}

ExperimentResult run_phase_curve(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentResult result;
    Table boundary{"", {"alpha", "delta", "rho", "rho_c"}, {}};
    const int points = spec.grid;
    for (int k = 0; k <= points; ++k) {
        const double alpha = 10.0 * k / points;
        const auto [delta, rho] = parametric_boundary(alpha);
        const std::string rc = (delta > 0.0 && delta < 1.0) ? fmt_num(rho_c(delta)) : fmt_num(rho);
        boundary.add({fmt_num(alpha), fmt_num(delta), fmt_num(rho), rc});
    }
    Table levels{"mstar", {"delta", "rho", "m_star"}, {}};
    for (int i = 0; i < points; ++i) {
        const double delta = (i + 0.5) / points;
        for (int j = 0; j < points; ++j) {
            const double rho = (j + 0.5) / points;
            levels.add({fmt_num(delta), fmt_num(rho), fmt_num(minimax_risk_star(delta, rho))});
        }
    }
    result.tables.push_back(std::move(boundary));
    result.tables.push_back(std::move(levels));
    return result;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    switch (spec.kind) {
    case ExperimentKind::MseVsLambda: return run_mse_vs_lambda(spec);
    case ExperimentKind::Convergence: return run_convergence(spec);
    case ExperimentKind::NoiseHistogram: return run_noise_histogram(spec);
    case ExperimentKind::SeTracking: return run_se_tracking(spec);
    case ExperimentKind::ResampledOracle: return run_resampled_oracle(spec);
    case ExperimentKind::PhaseCurve: return run_phase_curve(spec);
    }
    throw SpecError("unknown experiment kind");
}

json manifest(const ExperimentSpec& spec, const ExperimentResult& result) {
    json outcomes = json::array();
    for (const auto& o : result.outcomes) {
        json entry = {{"cell", o.cell}, {"seed", o.seed}, {"ok", o.ok}};
        if (!o.ok) entry["error"] = o.error;
        if (!o.data.is_null() && !o.data.empty()) entry["data"] = o.data;
        outcomes.push_back(std::move(entry));
    }
    return json{{"spec", spec.to_json()}, {"spec_hash", spec_hash(spec)}, {"outcomes", outcomes},
                {"summary", result.summary.is_null() ? json::object() : result.summary}};
}

std::vector<std::string> write_outputs(const ExperimentSpec& spec, const ExperimentResult& result) {
    require(!spec.out.empty(), "write_outputs: no output path");
    std::string stem = spec.out;
    if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".csv") stem.resize(stem.size() - 4);
    std::vector<std::string> written;
    const auto parent = std::filesystem::path(stem).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    auto write = [&](const std::string& path, const std::string& body) {
        std::ofstream f(path);
        if (!f) throw SpecError("cannot write " + path);
        f << body;
        written.push_back(path);
    };
    for (const auto& table : result.tables)
        write(table.name.empty() ? stem + ".csv" : stem + "_" + table.name + ".csv", table.to_csv());
    write(stem + ".manifest.json", manifest(spec, result).dump(2) + "\n");
    return written;
}

} // namespace amp
