#include "amp/instance.hpp"

#include <bit>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace amp {

std::string to_string(Ensemble e) { return e == Ensemble::Gaussian ? "gaussian" : "rademacher"; }

Ensemble parse_ensemble(const std::string& name) {
    if (name == "gaussian") return Ensemble::Gaussian;
    if (name == "rademacher") return Ensemble::Rademacher;
    throw SpecError("unknown ensemble '" + name + "' (expected gaussian or rademacher)");
}

Eigen::VectorXd sparse_sign_signal(Eigen::Index n, Eigen::Index k, std::uint64_t seed, double magnitude) {
    require(n >= 1 && k >= 0 && k <= n, "sparse_sign_signal: need 0 <= k <= n");
    Rng rng(seed);
    std::vector<Eigen::Index> index(static_cast<std::size_t>(n));
    std::iota(index.begin(), index.end(), Eigen::Index{0});
    // Partial Fisher-Yates: the first k slots become the support.
    for (Eigen::Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
        std::swap(index[static_cast<std::size_t>(i)], index[static_cast<std::size_t>(pick(rng))]);
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < k; ++i) x[index[static_cast<std::size_t>(i)]] = (rng() & 1U) ? magnitude : -magnitude;
    return x;
}

ConvergingReport check_converging(const InstanceXd& inst, const ModelParams& params) {
    ConvergingReport rep;
    const Eigen::VectorXd norms = inst.a.colwise().norm().transpose();
    rep.max_column_norm = norms.maxCoeff();
    rep.min_column_norm = norms.minCoeff();
    rep.norm_tolerance = 5.0 / std::sqrt(static_cast<double>(inst.m));
    rep.norms_ok = std::abs(rep.max_column_norm - 1.0) <= rep.norm_tolerance &&
                   std::abs(rep.min_column_norm - 1.0) <= rep.norm_tolerance;

    const auto& prior = params.prior;
    const double m2 = second_moment(prior);
    double m4 = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) m4 += prior.weights[k] * std::pow(prior.atoms[k], 4);
    rep.signal_second_moment = inst.x0.squaredNorm() / static_cast<double>(inst.n);
    rep.signal_tolerance = 5.0 * std::sqrt(std::max(m4 - m2 * m2, 0.0) / static_cast<double>(inst.n));
    rep.signal_ok = std::abs(rep.signal_second_moment - m2) <= rep.signal_tolerance + 1e-15;

    // Gaussian noise: Var(W^2) = 2 sigma^4.
    rep.noise_variance = inst.w.squaredNorm() / static_cast<double>(inst.m);
    rep.noise_tolerance = 5.0 * std::sqrt(2.0 * params.sigma2 * params.sigma2 / static_cast<double>(inst.m));
    rep.noise_ok = std::abs(rep.noise_variance - params.sigma2) <= rep.noise_tolerance + 1e-15;
    return rep;
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary bundle assumes a little-endian host");

void write_doubles(std::ofstream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* data, std::size_t count) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw SpecError("load_instance: truncated binary bundle");
}

} // namespace

void save_instance(const InstanceXd& inst, double sigma2, Ensemble ensemble, const std::string& prefix) {
    nlohmann::json header = {{"m", inst.m},          {"n", inst.n},         {"delta", inst.delta},
                             {"sigma2", sigma2},     {"seed", inst.seed},   {"ensemble", to_string(ensemble)},
                             {"layout", "A row-major, x0, w, y; float64 little-endian"}};
    std::ofstream js(prefix + ".json");
    if (!js) throw SpecError("save_instance: cannot open " + prefix + ".json");
    js << header.dump(2) << '\n';

    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw SpecError("save_instance: cannot open " + prefix + ".bin");
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = inst.a;
    write_doubles(bin, rows.data(), static_cast<std::size_t>(rows.size()));
    write_doubles(bin, inst.x0.data(), static_cast<std::size_t>(inst.n));
    write_doubles(bin, inst.w.data(), static_cast<std::size_t>(inst.m));
    write_doubles(bin, inst.y.data(), static_cast<std::size_t>(inst.m));
}

LoadedInstance load_instance(const std::string& prefix) {
    std::ifstream js(prefix + ".json");
    if (!js) throw SpecError("load_instance: cannot open " + prefix + ".json");
    nlohmann::json header;
    try {
        js >> header;
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("load_instance: bad header: ") + e.what());
    }
    LoadedInstance out;
    auto& inst = out.instance;
    inst.m = header.at("m").get<Eigen::Index>();
    inst.n = header.at("n").get<Eigen::Index>();
    require(inst.m >= 1 && inst.n >= 1, "load_instance: bad dimensions");
    inst.delta = header.at("delta").get<double>();
    inst.seed = header.at("seed").get<std::uint64_t>();
    out.sigma2 = header.at("sigma2").get<double>();
    out.ensemble = parse_ensemble(header.value("ensemble", "gaussian"));

    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw SpecError("load_instance: cannot open " + prefix + ".bin");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(inst.m, inst.n);
    read_doubles(bin, rows.data(), static_cast<std::size_t>(rows.size()));
    inst.a = rows;
    inst.x0.resize(inst.n);
    inst.w.resize(inst.m);
    inst.y.resize(inst.m);
    read_doubles(bin, inst.x0.data(), static_cast<std::size_t>(inst.n));
    read_doubles(bin, inst.w.data(), static_cast<std::size_t>(inst.m));
    read_doubles(bin, inst.y.data(), static_cast<std::size_t>(inst.m));
    return out;
}

} // namespace amp
