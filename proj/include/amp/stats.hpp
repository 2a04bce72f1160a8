#pragma once

#include <functional>
#include <vector>

namespace amp::stats {

struct Summary {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation (n - 1)
    double se = 0.0;  // sd / sqrt(n)
    std::size_t count = 0;
};

Summary summarize(const std::vector<double>& values);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Kolmogorov tail probability Q(lambda) = 2 sum_k (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

/// One-sample Kolmogorov-Smirnov test against a continuous cdf. The p-value uses
/// the asymptotic distribution with Stephens' finite-n correction.
KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf);

/// KS test against normal(mean, sd).
KsResult ks_normal(const std::vector<double>& sample, double mean, double sd);

struct Histogram {
    std::vector<double> centers;
    std::vector<long> counts;
};
Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins);

} // namespace amp::stats
