#include "dtrwql/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>

namespace dtrwql {

namespace {

// mid-ranks of the pooled sample, x first
std::vector<double> pooled_midranks(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size() + y.size();
    std::vector<std::size_t> order(n);
    std::vector<double> pooled(n);
    for (std::size_t i = 0; i < x.size(); ++i) pooled[i] = x[i];
    for (std::size_t j = 0; j < y.size(); ++j) pooled[x.size() + j] = y[j];
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
        i = j + 1;
    }
    return ranks;
}

bool pooled_has_ties(std::span<const double> x, std::span<const double> y) {
    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    std::sort(pooled.begin(), pooled.end());
    return std::adjacent_find(pooled.begin(), pooled.end()) != pooled.end();
}

// exact null distribution of the rank-sum of a size-m subset of {1..n}:
// count[w] = number of subsets with rank sum w
double exact_two_sided_p(int m, int n_total, int w_obs) {
    const int w_max = n_total * (n_total + 1) / 2;
    // dp[k][w] over items 1..n_total; rolled over items
    std::vector<std::vector<double>> dp(m + 1, std::vector<double>(w_max + 1, 0.0));
    dp[0][0] = 1.0;
    for (int item = 1; item <= n_total; ++item) {
        for (int k = std::min(item, m); k >= 1; --k) {
            for (int w = w_max; w >= item; --w) {
                if (dp[k - 1][w - item] > 0) dp[k][w] += dp[k - 1][w - item];
            }
        }
    }
    double total = 0.0, le = 0.0, ge = 0.0;
    for (int w = 0; w <= w_max; ++w) {
        const double c = dp[m][w];
        total += c;
        if (w <= w_obs) le += c;
        if (w >= w_obs) ge += c;
    }
    const double p = 2.0 * std::min(le, ge) / total;
    return std::min(1.0, p);
}

}  // namespace

double wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y) {
    if (x.empty() || y.empty()) throw std::invalid_argument("wilcoxon_rank_sum: empty sample");
    const std::size_t nx = x.size(), ny = y.size(), n = nx + ny;

    const std::vector<double> ranks = pooled_midranks(x, y);
    double w = 0.0;
    for (std::size_t i = 0; i < nx; ++i) w += ranks[i];

    if (nx <= 10 && ny <= 10 && !pooled_has_ties(x, y)) {
        return exact_two_sided_p(static_cast<int>(nx), static_cast<int>(n),
                                 static_cast<int>(std::lround(w)));
    }

    const double mu = static_cast<double>(nx) * (static_cast<double>(n) + 1.0) / 2.0;
    // tie correction: sum over tie groups of (t^3 - t)
    std::map<double, int> counts;
    for (std::size_t i = 0; i < n; ++i) counts[ranks[i]]++;
    double tie_sum = 0.0;
    for (const auto& [r, t] : counts) {
        (void)r;
        tie_sum += static_cast<double>(t) * t * t - t;
    }
    const double nn = static_cast<double>(n);
    const double var = static_cast<double>(nx) * static_cast<double>(ny) / 12.0 *
                       ((nn + 1.0) - tie_sum / (nn * (nn - 1.0)));
    if (var <= 0.0) return 1.0;  // all observations tied
    double d = w - mu;
    // continuity correction toward the mean
    d -= (d > 0 ? 0.5 : (d < 0 ? -0.5 : 0.0));
    const double z = d / std::sqrt(var);
    const double p = 2.0 * (1.0 - normal_cdf(std::fabs(z)));
    return std::min(1.0, std::max(p, 1e-300));
}

double chi2_cdf_df1(double x) {
    if (x <= 0.0) return 0.0;
    return std::erf(std::sqrt(0.5 * x));
}

double chi2_quantile_df1(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("chi2_quantile_df1: prob must be in (0,1)");
    double lo = 0.0, hi = 1.0;
    while (chi2_cdf_df1(hi) < prob) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        (chi2_cdf_df1(mid) < prob ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile: empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(std::clamp(h, 0.0, double(values.size() - 1))));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / (static_cast<double>(v.size()) - 1.0));
}

}  // namespace dtrwql
