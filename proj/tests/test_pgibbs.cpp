#include "dsmc/pgibbs.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <doctest.h>

#include "dsmc/kalman.hpp"
#include "dsmc/stats.hpp"
#include "support/ar1.hpp"

namespace st = dsmc::stats;

TEST_CASE("update_rate: hand cases and input guards") {
  std::vector<std::vector<double>> stars = {
      {0.0, 1.0, 2.0}, {0.0, 1.0, 2.0}, {0.0, 1.0, 2.0}};
  auto zero = dsmc::update_rate(stars);
  CHECK(zero == std::vector<double>{0.0, 0.0, 0.0});

  stars[1] = {5.0, 6.0, 7.0};
  stars[2] = {1.0, 2.0, 3.0};
  auto one = dsmc::update_rate(stars);
  CHECK(one == std::vector<double>{1.0, 1.0, 1.0});

  // Middle time changes in one of the two transitions.
  stars = {{0.0, 1.0, 2.0}, {0.0, 9.0, 2.0}, {0.0, 9.0, 2.0}};
  auto mid = dsmc::update_rate(stars);
  CHECK(mid[0] == 0.0);
  CHECK(mid[1] == doctest::Approx(0.5));
  CHECK(mid[2] == 0.0);

  CHECK_THROWS_AS(dsmc::update_rate({{1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(dsmc::update_rate({{1.0, 2.0}, {1.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(dsmc::update_rate(stars, 2), std::invalid_argument);
}

TEST_CASE("gamma_draw matches the Gamma law across shapes") {
  dsmc::RngStream stream({314, 0, 0, dsmc::StreamRole::gibbs_param});
  for (double shape : {0.7, 1.0, 2.5, 11.0}) {
    for (double rate : {0.5, 3.0}) {
      const int n = 20000;
      std::vector<double> draws(n);
      for (auto& d : draws) d = dsmc::gamma_draw(shape, rate, stream);
      const double mean = st::mean(draws);
      const double var = st::variance(draws);
      CHECK(mean == doctest::Approx(shape / rate).epsilon(0.05));
      CHECK(var == doctest::Approx(shape / (rate * rate)).epsilon(0.12));

      boost::math::gamma_distribution<double> g(shape, 1.0 / rate);
      const double d = st::ks_statistic(
          draws, [&](double x) { return boost::math::cdf(g, x); });
      CHECK(st::ks_pvalue(d, draws.size()) > 1e-3);
    }
  }
  CHECK_THROWS_AS(dsmc::gamma_draw(0.0, 1.0, stream), std::invalid_argument);
  CHECK_THROWS_AS(dsmc::gamma_draw(1.0, -1.0, stream), std::invalid_argument);
}

TEST_CASE("draw_precisions: conjugate posterior on a hand trajectory") {
  dsmc::ThetaLogisticParams p;
  p.tau0 = 0.2;
  p.tau1 = 0.1;
  p.tau2 = 0.5;
  p.q2 = 1.0;
  p.r2 = 1.0;
  // Three steps: x = (0.0, 0.4, -0.2), y = (0.1, 0.3, -0.4).
  const std::vector<double> star = {0.0, 0.4, -0.2};
  const std::vector<double> ys = {0.1, 0.3, -0.4};
  dsmc::ThetaLogisticGibbsConfig cfg;
  cfg.prec_x_shape = 2.0;
  cfg.prec_x_rate = 1.0;
  cfg.prec_y_shape = 3.0;
  cfg.prec_y_rate = 0.5;

  // Hand sums: f(x) = x + 0.2 - 0.1 exp(0.5 x).
  const double f0 = 0.0 + 0.2 - 0.1 * std::exp(0.0);       // 0.1
  const double f1 = 0.4 + 0.2 - 0.1 * std::exp(0.2);       // 0.477859...
  const double ss_x = (0.4 - f0) * (0.4 - f0) +
                      (-0.2 - f1) * (-0.2 - f1);
  const double ss_y = 0.01 + 0.01 + 0.04;
  const double shape_x = 2.0 + 1.0;          // T = 2
  const double rate_x = 1.0 + 0.5 * ss_x;
  const double shape_y = 3.0 + 1.5;          // T + 1 = 3
  const double rate_y = 0.5 + 0.5 * ss_y;

  dsmc::RngStream stream({11, 0, 0, dsmc::StreamRole::gibbs_param});
  const int n = 20000;
  std::vector<double> px(n), py(n);
  for (int i = 0; i < n; ++i) {
    auto drawn = dsmc::draw_precisions(p, ys, star, cfg, stream);
    CHECK(drawn.tau0 == p.tau0);  // taus pass through untouched
    CHECK(drawn.tau1 == p.tau1);
    px[i] = 1.0 / drawn.q2;
    py[i] = 1.0 / drawn.r2;
  }
  boost::math::gamma_distribution<double> gx(shape_x, 1.0 / rate_x);
  boost::math::gamma_distribution<double> gy(shape_y, 1.0 / rate_y);
  CHECK(st::ks_pvalue(
            st::ks_statistic(px, [&](double v) { return cdf(gx, v); }), n) >
        1e-3);
  CHECK(st::ks_pvalue(
            st::ks_statistic(py, [&](double v) { return cdf(gy, v); }), n) >
        1e-3);

  CHECK_THROWS_AS(dsmc::draw_precisions(p, ys, {0.0, 1.0}, cfg, stream),
                  std::invalid_argument);
}

TEST_CASE("pgibbs_sweep with an identity kernel is a pure conditional chain") {
  // With a fixed linear-Gaussian model the sweep must preserve the exact
  // smoothing posterior: start the path at an exact posterior draw, sweep
  // once, and compare per-time moments over replicates.
  auto spec = testsupport::default_ar1(5);
  auto exact = testsupport::ar1_exact(spec);
  auto kr = dsmc::kalman_smooth(exact);
  auto fk = testsupport::ar1_fk(spec);
  const int T = fk.horizon;

  dsmc::ParamKernel identity = [](dsmc::GibbsState&, dsmc::RngStream&) {};
  dsmc::GibbsModelBuilder fixed = [&fk](dsmc::GibbsState&) { return fk; };

  dsmc::ConditionalOptions copts;
  copts.n_particles = 25;

  const int reps = 600;
  std::vector<std::vector<double>> out_t(static_cast<std::size_t>(T) + 1,
                                         std::vector<double>(reps));
  int changed_any = 0;
  for (int rep = 0; rep < reps; ++rep) {
    dsmc::RngStream prior({7777, 0, static_cast<std::uint64_t>(rep),
                           dsmc::StreamRole::data_sim});
    auto draw = dsmc::posterior_joint_sample(exact, kr, prior);
    dsmc::GibbsState state;
    state.star.resize(static_cast<std::size_t>(T) + 1);
    for (int t = 0; t <= T; ++t)
      state.star[static_cast<std::size_t>(t)] =
          draw[static_cast<std::size_t>(t)](0);
    copts.seed = 50000 + static_cast<std::uint64_t>(rep);
    auto out = dsmc::pgibbs_sweep(state, fixed, identity, copts, 1);
    for (int t = 0; t <= T; ++t)
      out_t[static_cast<std::size_t>(t)][rep] =
          out.state.star[static_cast<std::size_t>(t)];
    for (char c : out.changed) changed_any += c ? 1 : 0;
  }
  CHECK(changed_any > 0);
  for (int t = 0; t <= T; ++t) {
    const auto& col = out_t[static_cast<std::size_t>(t)];
    const double want_m = kr.smooth_mean[static_cast<std::size_t>(t)](0);
    const double want_v = kr.smooth_cov[static_cast<std::size_t>(t)](0, 0);
    const double se_m = std::sqrt(want_v / reps);
    CHECK(std::abs(testsupport::mean_of(col) - want_m) < 5.0 * se_m);
    CHECK(testsupport::var_of(col) ==
          doctest::Approx(want_v).epsilon(0.35));
  }
}

TEST_CASE("pgibbs_sweep aborts cleanly when a kernel or builder throws") {
  auto spec = testsupport::default_ar1(3);
  auto fk = testsupport::ar1_fk(spec);
  dsmc::GibbsState state;
  state.theta = {1.0, 2.0};
  state.star = {0.1, -0.2, 0.3, 0.0};
  const dsmc::GibbsState before = state;

  dsmc::ConditionalOptions copts;
  copts.n_particles = 8;
  copts.seed = 9;

  dsmc::ParamKernel bad_kernel = [](dsmc::GibbsState&, dsmc::RngStream&) {
    throw std::runtime_error("prior evaluation failed");
  };
  dsmc::GibbsModelBuilder fixed = [&fk](dsmc::GibbsState&) { return fk; };
  CHECK_THROWS_AS(dsmc::pgibbs_sweep(state, fixed, bad_kernel, copts, 1),
                  std::runtime_error);
  CHECK(state.theta == before.theta);
  CHECK(state.star == before.star);

  // A kernel that mutates, then a builder that throws: still no commit.
  dsmc::ParamKernel mutating = [](dsmc::GibbsState& s, dsmc::RngStream&) {
    s.theta[0] = 99.0;
  };
  dsmc::GibbsModelBuilder bad_builder =
      [](dsmc::GibbsState&) -> dsmc::FeynmanKacModel {
    throw std::runtime_error("linearization diverged");
  };
  CHECK_THROWS_AS(dsmc::pgibbs_sweep(state, bad_builder, mutating, copts, 1),
                  std::runtime_error);
  CHECK(state.theta == before.theta);

  // Path/model shape mismatch is caught before the conditional run.
  dsmc::GibbsState short_star;
  short_star.star = {0.1, 0.2};
  dsmc::ParamKernel identity = [](dsmc::GibbsState&, dsmc::RngStream&) {};
  CHECK_THROWS_AS(dsmc::pgibbs_sweep(short_star, fixed, identity, copts, 1),
                  std::invalid_argument);
  dsmc::GibbsState empty;
  CHECK_THROWS_AS(dsmc::pgibbs_sweep(empty, fixed, identity, copts, 1),
                  std::invalid_argument);
}

TEST_CASE("theta-logistic chain: determinism, support, and mixing basics") {
  dsmc::ThetaLogisticParams truth;
  truth.tau0 = 0.15;
  truth.tau1 = 0.10;
  truth.tau2 = 0.50;
  truth.q2 = 0.09;
  truth.r2 = 0.04;
  auto data = dsmc::simulate_theta_logistic(truth, 40, 2024);

  dsmc::ThetaLogisticGibbsConfig cfg;
  cfg.n_particles = 32;
  dsmc::ThetaLogisticParams init = truth;  // start near the data-generating point

  auto chain = dsmc::run_theta_logistic_pgibbs(data.ys, init, cfg, 60, 5);
  REQUIRE(chain.thetas.size() == 60);
  REQUIRE(chain.stars.size() == 60);
  for (const auto& th : chain.thetas) {
    CHECK(std::isfinite(th.tau0));
    CHECK(th.tau1 > 0.0);
    CHECK(th.tau2 > 0.0);
    CHECK(th.q2 > 0.0);
    CHECK(th.r2 > 0.0);
  }
  CHECK(chain.weight_evals > 0);

  // The path renews at a healthy rate under multinomial stitching.
  auto rates = dsmc::update_rate(chain.stars);
  REQUIRE(rates.size() == 41);
  double mean_rate = 0.0;
  for (double r : rates) {
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    mean_rate += r;
  }
  mean_rate /= static_cast<double>(rates.size());
  CHECK(mean_rate > 0.3);

  // Some parameter moves happen (conjugate draws always move; RWM sometimes).
  CHECK(chain.thetas[5].q2 != chain.thetas[6].q2);

  auto again = dsmc::run_theta_logistic_pgibbs(data.ys, init, cfg, 60, 5);
  CHECK(again.thetas.back().q2 == chain.thetas.back().q2);
  CHECK(again.stars.back() == chain.stars.back());
  CHECK(again.rwm_accepts == chain.rwm_accepts);
  auto other = dsmc::run_theta_logistic_pgibbs(data.ys, init, cfg, 60, 6);
  CHECK(other.stars.back() != chain.stars.back());

  // Input guards.
  dsmc::ThetaLogisticParams bad = init;
  bad.tau1 = -0.1;
  CHECK_THROWS_AS(dsmc::run_theta_logistic_pgibbs(data.ys, bad, cfg, 3, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(dsmc::run_theta_logistic_pgibbs({1.0}, init, cfg, 3, 1),
                  std::invalid_argument);
}

TEST_CASE("theta-logistic chain recovers parameters of a conjugate-only "
          "reduction") {
  // With the taus frozen (zero RWM step) the chain is Gibbs over (path, q2,
  // r2) only; on linear data (tau1 tiny) the precision posteriors
  // concentrate near the generating values.
  dsmc::ThetaLogisticParams truth;
  truth.tau0 = 0.1;
  truth.tau1 = 1e-8;
  truth.tau2 = 1e-8;
  truth.q2 = 0.25;
  truth.r2 = 0.09;
  auto data = dsmc::simulate_theta_logistic(truth, 150, 99);

  dsmc::ThetaLogisticGibbsConfig cfg;
  cfg.n_particles = 48;
  cfg.rwm_step_tau = 0.0;
  cfg.rwm_step_x0 = 0.0;
  auto chain = dsmc::run_theta_logistic_pgibbs(data.ys, truth, cfg, 300, 17);

  double mq = 0.0, mr = 0.0;
  const std::size_t burn = 50;
  for (std::size_t s = burn; s < chain.thetas.size(); ++s) {
    mq += chain.thetas[s].q2;
    mr += chain.thetas[s].r2;
  }
  mq /= static_cast<double>(chain.thetas.size() - burn);
  mr /= static_cast<double>(chain.thetas.size() - burn);
  CHECK(mq == doctest::Approx(truth.q2).epsilon(0.5));
  CHECK(mr == doctest::Approx(truth.r2).epsilon(0.5));
}
