#pragma once

#include <cstddef>
#include <functional>
#include <vector>

// Small statistics toolbox for the experiment harness and acceptance checks:
// goodness-of-fit tests, multiple-testing correction, and the summary
// quantities the experiment CSVs report.

namespace dsmc::stats {

// Two-sided Kolmogorov-Smirnov statistic of a sample against a continuous
// CDF. The sample is copied and sorted internally.
double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf);

// Asymptotic two-sided KS p-value with the usual finite-n correction
// lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) * d.
double ks_pvalue(double d, std::size_t n);

// Upper-tail chi-square p-value with `dof` degrees of freedom.
double chi_square_pvalue(double stat, double dof);

// Chi-square statistic of observed counts against expected counts (> 0 each).
double chi_square_stat(const std::vector<double>& observed,
                       const std::vector<double>& expected);

// Benjamini-Hochberg adjusted p-values, in the input order.
std::vector<double> benjamini_hochberg(const std::vector<double>& p);

// Total variation distance between two probability vectors of equal length.
double tv_distance(const std::vector<double>& a, const std::vector<double>& b);

// Least-squares slope of y against x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

// Autocorrelation with the biased 1/n normalization, lags 0..max_lag
// (lag 0 is always 1). Throws std::invalid_argument on a constant series.
std::vector<double> acf(const std::vector<double>& series,
                        std::size_t max_lag);

double mean(const std::vector<double>& v);
double variance(const std::vector<double>& v);  // unbiased, needs size >= 2

}  // namespace dsmc::stats
