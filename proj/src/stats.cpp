#include "leakguard/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace leakguard {

double mean_of(const std::vector<double>& x) {
    if (x.empty()) return std::nan("");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double sample_sd(const std::vector<double>& x) {
    std::size_t n = x.size();
    if (n < 2) return std::nan("");
    double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

double quantile7(std::vector<double> x, double p) {
    if (x.empty()) return std::nan("");
    std::sort(x.begin(), x.end());
    if (p <= 0.0) return x.front();
    if (p >= 1.0) return x.back();
    double h = (static_cast<double>(x.size()) - 1.0) * p;
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    double frac = h - static_cast<double>(lo);
    if (lo + 1 >= x.size()) return x.back();
    return x[lo] + frac * (x[lo + 1] - x[lo]);
}

double median_of(std::vector<double> x) { return quantile7(std::move(x), 0.5); }

double mad_of(const std::vector<double>& x) {
    double med = median_of(x);
    std::vector<double> dev(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) dev[i] = std::fabs(x[i] - med);
    return median_of(std::move(dev));
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / 1.4142135623730951);
}

double normal_quantile(double p) {
    boost::math::normal_distribution<double> d;
    return boost::math::quantile(d, p);
}

double student_t_quantile(double p, double df) {
    boost::math::students_t_distribution<double> d(df);
    return boost::math::quantile(d, p);
}

double chi_squared_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared_distribution<double> d(df);
    return boost::math::cdf(boost::math::complement(d, x));
}

double binomial_upper_tail(int k, int n, double p) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    boost::math::binomial_distribution<double> d(static_cast<double>(n), p);
    return boost::math::cdf(boost::math::complement(d, static_cast<double>(k - 1)));
}

WilsonInterval wilson_interval(int successes, int n, double conf) {
    WilsonInterval w;
    if (n <= 0) return w;
    double z = normal_quantile(0.5 + conf / 2.0);
    double nn = static_cast<double>(n);
    double phat = static_cast<double>(successes) / nn;
    double denom = 1.0 + z * z / nn;
    double center = phat + z * z / (2.0 * nn);
    double half = z * std::sqrt(phat * (1.0 - phat) / nn + z * z / (4.0 * nn * nn));
    w.lower = std::max(0.0, (center - half) / denom);
    w.upper = std::min(1.0, (center + half) / denom);
    return w;
}

double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) return std::nan("");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na -
                                  static_cast<double>(j) / nb));
    }
    double ne = std::sqrt(na * nb / (na + nb));
    double lambda = (ne + 0.12 + 0.11 / ne) * d;
    // Kolmogorov tail series; it only converges for lambda away from zero,
    // and the tail probability there is 1 anyway
    double p = 0.0;
    bool converged = false;
    for (int k = 1; k <= 100; ++k) {
        double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) *
                      std::exp(-2.0 * k * k * lambda * lambda);
        p += term;
        if (std::fabs(term) < 1e-12) {
            converged = true;
            break;
        }
    }
    if (!converged) return 1.0;
    return std::clamp(p, 0.0, 1.0);
}

Chi2Result chi_squared_test(const std::vector<std::vector<double>>& counts) {
    Chi2Result res;
    std::size_t r = counts.size();
    if (r == 0) { res.valid = false; return res; }
    std::size_t c = counts[0].size();
    std::vector<double> row_sum(r, 0.0), col_sum(c, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        if (counts[i].size() != c) throw std::invalid_argument("ragged contingency table");
        for (std::size_t j = 0; j < c; ++j) {
            row_sum[i] += counts[i][j];
            col_sum[j] += counts[i][j];
            total += counts[i][j];
        }
    }
    // drop empty margins so df reflects occupied levels
    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < r; ++i) if (row_sum[i] > 0) rows.push_back(i);
    for (std::size_t j = 0; j < c; ++j) if (col_sum[j] > 0) cols.push_back(j);
    if (rows.size() < 2 || cols.size() < 2 || total <= 0) {
        res.valid = false;
        return res;
    }
    double stat = 0.0;
    for (std::size_t i : rows) {
        for (std::size_t j : cols) {
            double expected = row_sum[i] * col_sum[j] / total;
            double diff = counts[i][j] - expected;
            stat += diff * diff / expected;
        }
    }
    double k = static_cast<double>(std::min(rows.size(), cols.size()));
    res.statistic = stat;
    res.df = static_cast<double>((rows.size() - 1) * (cols.size() - 1));
    res.p_value = chi_squared_sf(stat, res.df);
    res.cramers_v = std::sqrt(stat / (total * (k - 1.0)));
    return res;
}

}  // namespace leakguard
