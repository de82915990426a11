#include "dsmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

namespace dsmc::stats {

double ks_statistic(std::vector<double> sample,
                    const std::function<double(double)>& cdf) {
  const std::size_t n = sample.size();
  if (n == 0) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(sample[i]);
    if (!(f >= 0.0 && f <= 1.0))
      throw std::invalid_argument("ks_statistic: CDF value outside [0, 1]");
    const double lo = f - static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n - f;
    d = std::max({d, lo, hi});
  }
  return d;
}

double ks_pvalue(double d, std::size_t n) {
  if (d <= 0.0) return 1.0;
  if (d >= 1.0) return 0.0;
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  // Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 101; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    p += sign * term;
    if (term < 1e-14) break;
    sign = -sign;
  }
  p *= 2.0;
  return std::clamp(p, 0.0, 1.0);
}

double chi_square_pvalue(double stat, double dof) {
  if (stat <= 0.0) return 1.0;
  const boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

double chi_square_stat(const std::vector<double>& observed,
                       const std::vector<double>& expected) {
  if (observed.size() != expected.size())
    throw std::invalid_argument("chi_square_stat: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (!(expected[i] > 0.0))
      throw std::invalid_argument(
          "chi_square_stat: expected counts must be positive");
    const double d = observed[i] - expected[i];
    s += d * d / expected[i];
  }
  return s;
}

std::vector<double> benjamini_hochberg(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&p](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const double scaled =
        p[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
    running = std::min(running, scaled);
    adj[order[r]] = running;
  }
  return adj;
}

double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("tv_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("ols_slope: need two equal-length samples");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("ols_slope: constant x");
  return sxy / sxx;
}

std::vector<double> acf(const std::vector<double>& series,
                        std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n < 2) throw std::invalid_argument("acf: need at least two points");
  if (max_lag >= n) throw std::invalid_argument("acf: max_lag >= length");
  const double m = mean(series);
  double c0 = 0.0;
  for (double v : series) c0 += (v - m) * (v - m);
  c0 /= static_cast<double>(n);
  if (c0 == 0.0) throw std::invalid_argument("acf: constant series");
  std::vector<double> r(max_lag + 1);
  r[0] = 1.0;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t i = 0; i + k < n; ++i)
      ck += (series[i] - m) * (series[i + k] - m);
    r[k] = ck / static_cast<double>(n) / c0;
  }
  return r;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("variance: need size >= 2");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace dsmc::stats
