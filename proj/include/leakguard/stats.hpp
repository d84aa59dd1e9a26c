#pragma once

#include <cstddef>
#include <vector>

namespace leakguard {

double mean_of(const std::vector<double>& x);
double sample_sd(const std::vector<double>& x);  // n-1 denominator

// linear-interpolation quantile (R type 7); x need not be sorted
double quantile7(std::vector<double> x, double p);
double median_of(std::vector<double> x);
// median absolute deviation around the median, unscaled
double mad_of(const std::vector<double>& x);

double normal_cdf(double x);
double normal_quantile(double p);
double student_t_quantile(double p, double df);
double chi_squared_sf(double x, double df);  // upper tail

// P(Bin(n, p) >= k)
double binomial_upper_tail(int k, int n, double p);

struct WilsonInterval {
    double lower = 0.0;
    double upper = 1.0;
};
WilsonInterval wilson_interval(int successes, int n, double conf = 0.95);

// asymptotic two-sample Kolmogorov-Smirnov p-value
double ks_two_sample_p(std::vector<double> a, std::vector<double> b);

struct Chi2Result {
    double statistic = 0.0;
    double df = 0.0;
    double p_value = 1.0;
    double cramers_v = 0.0;
    bool valid = true;
};
// counts is r x c, row-major
Chi2Result chi_squared_test(const std::vector<std::vector<double>>& counts);

}  // namespace leakguard
