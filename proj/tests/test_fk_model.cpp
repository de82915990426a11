#include "dsmc/fk_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <doctest.h>

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

// Random walk through a [-1, 1] gate: N(x_prev, sigma^2) transitions, hard
// indicator potential, uniform proposals and auxiliary densities on [-1, 1].
dsmc::FeynmanKacModel gated_walk_model(double sigma, int horizon) {
  dsmc::FeynmanKacModel m;
  m.state_dim = 1;
  m.horizon = horizon;
  const double var = sigma * sigma;
  m.proposal_sampler = [](int, std::size_t count, dsmc::RngStream& stream,
                          double* out) {
    for (std::size_t i = 0; i < count; ++i) out[i] = 2.0 * stream.uniform() - 1.0;
  };
  m.proposal_logdensity = [](int, const double* x) {
    return (std::fabs(*x) <= 1.0) ? -std::numbers::ln2 : -kInf;
  };
  m.aux_logdensity = [](int, const double* x) {
    return (std::fabs(*x) <= 1.0) ? -std::numbers::ln2 : -kInf;
  };
  m.log_potential = [](int, const double* x) {
    return (std::fabs(*x) <= 1.0) ? 0.0 : -kInf;
  };
  m.transition_logdensity = [var](int, const double* xp, const double* xc) {
    return log_normal_pdf(*xc, *xp, var);
  };
  m.init_logdensity = [](const double* x) {
    return (std::fabs(*x) <= 1.0) ? -std::numbers::ln2 : -kInf;
  };
  return m;
}

}  // namespace

TEST_CASE("stitch weight of the gated walk matches the closed form") {
  auto m = gated_walk_model(0.5, 8);
  const double xp = 0.3;
  const double xc = -0.2;
  // omega = p(xc|xp) * 1 / (1/2): the uniform auxiliary density cancels to a
  // factor of 2.
  const double expect = std::numbers::ln2 + log_normal_pdf(xc, xp, 0.25);
  CHECK(dsmc::log_stitch_weight(m, 3, &xp, &xc) == doctest::Approx(expect).epsilon(1e-15));

  const double outside = 1.5;
  CHECK(dsmc::log_stitch_weight(m, 3, &xp, &outside) == -kInf);
  // Dead x_prev is fine: the transition density is still finite, the weight
  // only dies through potential or transition.
  const double xp_out = 1.7;
  CHECK(std::isfinite(dsmc::log_stitch_weight(m, 3, &xp_out, &xc)));
}

TEST_CASE("leaf weights vanish when the proposal equals the auxiliary density") {
  auto m = gated_walk_model(0.5, 8);
  for (double x : {-0.9, -0.2, 0.0, 0.7}) {
    for (int t : {1, 4, 8}) {
      CHECK(dsmc::log_init_weight(m, t, &x) == 0.0);
    }
  }
  // Time zero targets h_0 * P_0 instead: 1 * (1/2) / (1/2) = 1.
  for (double x : {-0.9, 0.7}) {
    CHECK(dsmc::log_init_weight(m, 0, &x) == 0.0);
  }
}

TEST_CASE("time-zero leaf weight folds potential, prior, and proposal") {
  // Poisson observation y = 3 on a log-rate state with standard normal prior
  // and an off-center Gaussian proposal.
  dsmc::FeynmanKacModel m;
  m.state_dim = 1;
  m.horizon = 0;
  const int y = 3;
  m.proposal_sampler = [](int, std::size_t count, dsmc::RngStream& stream,
                          double* out) { stream.fill_normal(out, count); };
  m.proposal_logdensity = [](int, const double* x) {
    return log_normal_pdf(*x, 0.4, 2.25);
  };
  m.log_potential = [y](int, const double* x) {
    const double lam = std::exp(*x);
    return y * *x - lam - std::lgamma(double(y) + 1.0);
  };
  m.init_logdensity = [](const double* x) { return log_normal_pdf(*x, 0.0, 1.0); };

  const double x = 0.8;
  const double lam = std::exp(x);
  const double log_pois = y * x - lam - std::lgamma(4.0);
  const double expect =
      log_pois + log_normal_pdf(x, 0.0, 1.0) - log_normal_pdf(x, 0.4, 2.25);
  CHECK(dsmc::log_init_weight(m, 0, &x) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("stitch weight is the density ratio it claims to be") {
  // Simpson quadrature: integrating exp(log omega_c(xp, x)) against nu_c must
  // reproduce the integral of p_c(x|xp) h_c(x), for a model where nothing
  // cancels by construction.
  dsmc::FeynmanKacModel m;
  m.state_dim = 1;
  m.horizon = 4;
  m.proposal_sampler = [](int, std::size_t, dsmc::RngStream&, double*) {};
  m.proposal_logdensity = [](int, const double* x) {
    return log_normal_pdf(*x, 0.1, 1.44);
  };
  m.aux_logdensity = [](int, const double* x) {
    return log_normal_pdf(*x, 0.2, 0.81);
  };
  m.log_potential = [](int, const double* x) { return -0.25 * std::pow(*x, 4); };
  m.transition_logdensity = [](int, const double* xp, const double* xc) {
    return log_normal_pdf(*xc, 0.9 * *xp, 0.49);
  };
  m.init_logdensity = [](const double* x) { return log_normal_pdf(*x, 0.0, 1.0); };

  const double xp = -0.6;
  const int c = 2;
  const double lo = -8.0, hi = 8.0;
  const int cells = 2000;
  const double h = (hi - lo) / cells;
  double lhs = 0.0, rhs = 0.0;
  for (int k = 0; k <= cells; ++k) {
    const double x = lo + k * h;
    const double simpson =
        (k == 0 || k == cells) ? 1.0 : ((k % 2 == 1) ? 4.0 : 2.0);
    const double nu = std::exp(log_normal_pdf(x, 0.2, 0.81));
    lhs += simpson * std::exp(dsmc::log_stitch_weight(m, c, &xp, &x)) * nu;
    rhs += simpson * std::exp(log_normal_pdf(x, 0.9 * xp, 0.49) -
                              0.25 * std::pow(x, 4));
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("NaN densities raise instead of propagating") {
  auto m = gated_walk_model(0.5, 4);
  m.log_potential = [](int t, const double* x) {
    if ((t == 0 || t == 2) && *x > 0.5)
      return std::numeric_limits<double>::quiet_NaN();
    return (std::fabs(*x) <= 1.0) ? 0.0 : -kInf;
  };
  const double xp = 0.0, bad = 0.7;
  CHECK_THROWS_AS(dsmc::log_stitch_weight(m, 2, &xp, &bad), std::invalid_argument);
  CHECK_THROWS_AS(dsmc::log_init_weight(m, 0, &bad), std::invalid_argument);
}

TEST_CASE("auxiliary density must dominate the stitched numerator") {
  auto m = gated_walk_model(0.5, 4);
  m.aux_logdensity = [](int, const double* x) {
    return (*x >= 0.0 && *x <= 1.0) ? 0.0 : -kInf;  // misses [-1, 0)
  };
  const double xp = 0.0, xc = -0.5;
  CHECK_THROWS_AS(dsmc::log_stitch_weight(m, 1, &xp, &xc), std::invalid_argument);
}

TEST_CASE("validate_model rejects incomplete models") {
  auto good = gated_walk_model(0.5, 4);
  CHECK_NOTHROW(dsmc::validate_model(good));

  auto m = good;
  m.proposal_sampler = nullptr;
  CHECK_THROWS_AS(dsmc::validate_model(m), std::invalid_argument);

  m = good;
  m.state_dim = 0;
  CHECK_THROWS_AS(dsmc::validate_model(m), std::invalid_argument);

  m = good;
  m.horizon = -1;
  CHECK_THROWS_AS(dsmc::validate_model(m), std::invalid_argument);

  m = good;
  m.aux_logdensity = nullptr;
  CHECK_THROWS_AS(dsmc::validate_model(m), std::invalid_argument);

  // A T = 0 model never stitches, so transition and auxiliary callbacks are
  // not required.
  dsmc::FeynmanKacModel flat;
  flat.state_dim = 1;
  flat.horizon = 0;
  flat.proposal_sampler = good.proposal_sampler;
  flat.proposal_logdensity = good.proposal_logdensity;
  flat.log_potential = good.log_potential;
  flat.init_logdensity = good.init_logdensity;
  CHECK_NOTHROW(dsmc::validate_model(flat));
}

TEST_CASE("row fillers and batch weights match the scalar paths") {
  auto m = gated_walk_model(0.4, 6);
  const std::size_t n = 23;
  std::vector<double> right(n);
  for (std::size_t j = 0; j < n; ++j)
    right[j] = -1.3 + 2.6 * double(j) / double(n - 1);  // some outside the gate

  const double xp = 0.25;
  std::vector<double> row_fallback(n);
  auto filler = dsmc::make_stitch_row(m, 2, right.data(), n);
  filler(&xp, row_fallback.data());
  for (std::size_t j = 0; j < n; ++j) {
    CHECK(row_fallback[j] ==
          dsmc::log_stitch_weight(m, 2, &xp, &right[j]));
  }

  bool factory_used = false;
  m.stitch_row_factory = [&m, &factory_used](int c, const double* rp,
                                             std::size_t count) {
    factory_used = true;
    std::vector<double> snapshot(rp, rp + count);
    return [&m, c, snapshot](const double* x_prev, double* out) {
      for (std::size_t j = 0; j < snapshot.size(); ++j)
        out[j] = dsmc::log_stitch_weight(m, c, x_prev, &snapshot[j]);
    };
  };
  std::vector<double> row_factory(n);
  dsmc::make_stitch_row(m, 2, right.data(), n)(&xp, row_factory.data());
  CHECK(factory_used);
  CHECK(row_factory == row_fallback);

  std::vector<double> w_scalar(n), w_batch(n);
  dsmc::leaf_weights(m, 3, right.data(), n, w_scalar.data());
  for (std::size_t j = 0; j < n; ++j)
    CHECK(w_scalar[j] == dsmc::log_init_weight(m, 3, &right[j]));

  bool batch_used = false;
  m.init_weight_batch = [&m, &batch_used](int t, const double* p,
                                          std::size_t count, double* out) {
    batch_used = true;
    for (std::size_t j = 0; j < count; ++j)
      out[j] = dsmc::log_init_weight(m, t, &p[j]);
  };
  dsmc::leaf_weights(m, 3, right.data(), n, w_batch.data());
  CHECK(batch_used);
  CHECK(w_batch == w_scalar);
}
