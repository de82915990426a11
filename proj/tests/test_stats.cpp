#include "dsmc/stats.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "dsmc/rng.hpp"

namespace st = dsmc::stats;

TEST_CASE("KS statistic matches a hand-computed two-point case") {
  // Sample {0.2, 0.6} against U(0,1): the largest gap is 1.0 - 0.6 = 0.4.
  auto cdf = [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); };
  CHECK(st::ks_statistic({0.2, 0.6}, cdf) == doctest::Approx(0.4));
  CHECK(st::ks_statistic({0.5}, cdf) == doctest::Approx(0.5));
  CHECK_THROWS_AS(st::ks_statistic({}, cdf), std::invalid_argument);
}

TEST_CASE("KS p-values hit the classical critical points") {
  // lambda = c(alpha) makes the asymptotic p equal alpha:
  // c(0.10) = 1.22385, c(0.05) = 1.35810, c(0.01) = 1.62762.
  const double factor = std::sqrt(10000.0) + 0.12 + 0.11 / std::sqrt(10000.0);
  CHECK(st::ks_pvalue(1.22385 / factor, 10000) ==
        doctest::Approx(0.10).epsilon(0.01));
  CHECK(st::ks_pvalue(1.35810 / factor, 10000) ==
        doctest::Approx(0.05).epsilon(0.01));
  CHECK(st::ks_pvalue(1.62762 / factor, 10000) ==
        doctest::Approx(0.01).epsilon(0.02));
  CHECK(st::ks_pvalue(0.0, 100) == 1.0);
  CHECK(st::ks_pvalue(1.0, 100) == 0.0);
}

TEST_CASE("KS end to end: uniform sample accepted, shifted sample rejected") {
  dsmc::RngStream s({11, 0, 0, dsmc::StreamRole::data_sim});
  std::vector<double> u(2000);
  for (auto& v : u) v = s.uniform();
  auto cdf = [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); };
  const double d_ok = st::ks_statistic(u, cdf);
  CHECK(st::ks_pvalue(d_ok, u.size()) > 0.001);

  for (auto& v : u) v = 0.8 * v;  // compressed support: clearly not U(0,1)
  const double d_bad = st::ks_statistic(u, cdf);
  CHECK(st::ks_pvalue(d_bad, u.size()) < 1e-10);
}

TEST_CASE("chi-square p-values match table anchors") {
  CHECK(st::chi_square_pvalue(7.8147, 3.0) ==
        doctest::Approx(0.05).epsilon(2e-4));
  CHECK(st::chi_square_pvalue(3.8415, 1.0) ==
        doctest::Approx(0.05).epsilon(2e-4));
  CHECK(st::chi_square_pvalue(23.2093, 10.0) ==
        doctest::Approx(0.01).epsilon(2e-4));
  CHECK(st::chi_square_pvalue(0.0, 5.0) == 1.0);

  CHECK(st::chi_square_stat({10, 12, 8}, {10, 10, 10}) ==
        doctest::Approx(0.4 + 0.4));
  CHECK_THROWS_AS(st::chi_square_stat({1}, {0.0}), std::invalid_argument);
  CHECK_THROWS_AS(st::chi_square_stat({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("Benjamini-Hochberg adjustment on a worked example") {
  const std::vector<double> p = {0.01, 0.04, 0.03, 0.005};
  const auto adj = st::benjamini_hochberg(p);
  // sorted p: {.005, .01, .03, .04} -> m/rank scaled {.02, .02, .04, .04}
  CHECK(adj[0] == doctest::Approx(0.02));
  CHECK(adj[1] == doctest::Approx(0.04));
  CHECK(adj[2] == doctest::Approx(0.04));
  CHECK(adj[3] == doctest::Approx(0.02));

  // Monotone in the sorted order and never below the raw p.
  const std::vector<double> q = {0.9, 0.001, 0.5, 0.02, 0.02};
  const auto a2 = st::benjamini_hochberg(q);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(a2[i] >= q[i]);
  CHECK(st::benjamini_hochberg({}).empty());
}

TEST_CASE("total variation and regression slope behave on hand inputs") {
  CHECK(st::tv_distance({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(st::tv_distance({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(st::tv_distance({0.3, 0.7}, {0.4, 0.6}) == doctest::Approx(0.1));
  CHECK_THROWS_AS(st::tv_distance({1.0}, {0.5, 0.5}), std::invalid_argument);

  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> y(4);
  for (std::size_t i = 0; i < 4; ++i) y[i] = 3.0 - 0.5 * x[i];
  CHECK(st::ols_slope(x, y) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(st::ols_slope({1.0, 1.0}, {2.0, 3.0}),
                  std::invalid_argument);
}

TEST_CASE("autocorrelation: white noise, AR(1), and degenerate input") {
  dsmc::RngStream s({13, 0, 1, dsmc::StreamRole::data_sim});
  const std::size_t n = 20000;
  std::vector<double> white(n);
  for (auto& v : white) v = s.normal();
  auto rw = st::acf(white, 10);
  CHECK(rw[0] == 1.0);
  for (std::size_t k = 1; k <= 10; ++k)
    CHECK(std::abs(rw[k]) < 5.0 / std::sqrt(static_cast<double>(n)));

  std::vector<double> ar(n);
  ar[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i) ar[i] = 0.9 * ar[i - 1] + s.normal();
  auto ra = st::acf(ar, 5);
  for (std::size_t k = 1; k <= 5; ++k)
    CHECK(ra[k] == doctest::Approx(std::pow(0.9, k)).epsilon(0.1));

  CHECK_THROWS_AS(st::acf({1.0, 1.0, 1.0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(st::acf({1.0, 2.0}, 5), std::invalid_argument);

  CHECK(st::mean({1.0, 2.0, 3.0}) == doctest::Approx(2.0));
  CHECK(st::variance({1.0, 2.0, 3.0}) == doctest::Approx(1.0));
}
