#include "amp/stats.hpp"

#include <algorithm>
#include <cmath>

#include "amp/error.hpp"
#include "amp/gaussian.hpp"

namespace amp::stats {

Summary summarize(const std::vector<double>& values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.count);
    if (s.count > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(s.count - 1));
        s.se = s.sd / std::sqrt(static_cast<double>(s.count));
    }
    return s;
}

double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-17) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf) {
    require(!sample.empty(), "ks_test: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    const double sn = std::sqrt(n);
    return KsResult{d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

KsResult ks_normal(const std::vector<double>& sample, double mean, double sd) {
    require(sd > 0.0, "ks_normal: sd must be positive");
    return ks_test(sample, [mean, sd](double v) { return gauss::cdf((v - mean) / sd); });
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins) {
    require(bins >= 1 && hi > lo, "histogram: bad range");
    Histogram h;
    const double width = (hi - lo) / bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (int b = 0; b < bins; ++b) h.centers.push_back(lo + (b + 0.5) * width);
    for (double v : values) {
        if (v < lo || v > hi) continue;
        const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

} // namespace amp::stats
