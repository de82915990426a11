#include "dsmc/baselines.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include <doctest.h>

#include "dsmc/kalman.hpp"
#include "support/ar1.hpp"

using testsupport::Ar1Spec;
using testsupport::ar1_exact;
using testsupport::ar1_fk;
using testsupport::cov_of;
using testsupport::default_ar1;
using testsupport::mean_of;
using testsupport::var_of;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("filter evidence estimate is unbiased against the exact marginal") {
  const Ar1Spec spec = default_ar1(5);
  const auto m = ar1_fk(spec);
  const double exact = dsmc::kalman_smooth(ar1_exact(spec)).log_likelihood;

  const int reps = 500;
  std::vector<double> ratios(reps);
  for (int rep = 0; rep < reps; ++rep) {
    auto f = dsmc::run_particle_filter(m, 64, dsmc::Resampler::multinomial,
                                       1000 + rep);
    ratios[rep] = std::exp(f.log_likelihood - exact);
  }
  const double se = std::sqrt(var_of(ratios) / reps);
  CHECK(std::abs(mean_of(ratios) - 1.0) < 5.0 * se);
  CHECK(se < 0.05);

  std::vector<double> sys_ratios(reps);
  for (int rep = 0; rep < reps; ++rep) {
    auto f = dsmc::run_particle_filter(m, 64, dsmc::Resampler::systematic,
                                       4000 + rep);
    sys_ratios[rep] = std::exp(f.log_likelihood - exact);
  }
  const double se_sys = std::sqrt(var_of(sys_ratios) / reps);
  CHECK(std::abs(mean_of(sys_ratios) - 1.0) < 5.0 * se_sys);
}

TEST_CASE("backward-sampled paths match the exact smoothing posterior") {
  const Ar1Spec spec = default_ar1(7);
  const auto m = ar1_fk(spec);
  const auto kr = dsmc::kalman_smooth(ar1_exact(spec));
  const int T = m.horizon;

  const std::size_t n = 4096, draws = 4096;
  auto f = dsmc::run_particle_filter(m, n, dsmc::Resampler::multinomial, 77);
  auto bs = dsmc::ffbs_sample(m, f, draws, 78);
  CHECK(bs.density_evals ==
        static_cast<std::uint64_t>(draws) * static_cast<std::uint64_t>(T) * n);

  std::vector<std::vector<double>> by_t(T + 1, std::vector<double>(draws));
  for (std::size_t d = 0; d < draws; ++d)
    for (int t = 0; t <= T; ++t) by_t[t][d] = bs.path(d)[t];

  for (int t = 0; t <= T; ++t) {
    const double exact_mean = kr.smooth_mean[t](0);
    const double exact_var = kr.smooth_cov[t](0, 0);
    // draws share one filter history, so the nominal SE understates; use a
    // widened band plus a small absolute floor
    const double band = 6.0 * std::sqrt(exact_var / draws) + 0.01;
    CHECK(std::abs(mean_of(by_t[t]) - exact_mean) < band);
    CHECK(std::abs(var_of(by_t[t]) - exact_var) <
          6.0 * exact_var * std::sqrt(2.0 / (draws - 1)) + 0.01);
  }
  for (int t = 0; t < T; ++t) {
    const double exact_cov = kr.gain[t](0, 0) * kr.smooth_cov[t + 1](0, 0);
    const double vt = kr.smooth_cov[t](0, 0);
    const double vt1 = kr.smooth_cov[t + 1](0, 0);
    const double band =
        6.0 * std::sqrt((vt * vt1 + exact_cov * exact_cov) / draws) + 0.01;
    CHECK(std::abs(cov_of(by_t[t], by_t[t + 1]) - exact_cov) < band);
  }
}

TEST_CASE("batched backward rows equal the scalar fallback bitwise") {
  const Ar1Spec spec = default_ar1(6);
  const auto fast = ar1_fk(spec);
  auto slow = ar1_fk(spec);
  slow.transition_row_factory = nullptr;

  auto f = dsmc::run_particle_filter(fast, 256, dsmc::Resampler::systematic, 5);
  auto a = dsmc::ffbs_sample(fast, f, 64, 6);
  auto b = dsmc::ffbs_sample(slow, f, 64, 6);
  REQUIRE(a.paths.size() == b.paths.size());
  CHECK(std::memcmp(a.paths.data(), b.paths.data(),
                    sizeof(double) * a.paths.size()) == 0);
}

TEST_CASE("single-particle filter degenerates to one weighted path") {
  const Ar1Spec spec = default_ar1(4);
  const auto m = ar1_fk(spec);
  auto f = dsmc::run_particle_filter(m, 1, dsmc::Resampler::multinomial, 9);
  CHECK(f.n == 1);
  // with one particle every normalized weight is 1
  for (int t = 0; t <= 4; ++t) CHECK(f.weights_at(t)[0] == 0.0);
  CHECK(std::isfinite(f.log_likelihood));

  auto bs = dsmc::ffbs_sample(m, f, 8, 10);
  for (std::size_t d = 0; d < 8; ++d)
    for (int t = 0; t <= 4; ++t) CHECK(bs.path(d)[t] == f.time_slab(t)[0]);
}

TEST_CASE("horizon-zero runs draw from the final weights only") {
  Ar1Spec spec = default_ar1(4);
  spec.ys.resize(1);
  const auto m = ar1_fk(spec);
  const auto kr = dsmc::kalman_smooth(ar1_exact(spec));

  auto f = dsmc::run_particle_filter(m, 8192, dsmc::Resampler::multinomial, 3);
  auto bs = dsmc::ffbs_sample(m, f, 8192, 4);
  CHECK(bs.density_evals == 0);

  std::vector<double> xs(bs.n_draws);
  for (std::size_t d = 0; d < bs.n_draws; ++d) xs[d] = bs.path(d)[0];
  const double v = kr.smooth_cov[0](0, 0);
  CHECK(std::abs(mean_of(xs) - kr.smooth_mean[0](0)) <
        6.0 * std::sqrt(v / bs.n_draws) + 0.005);
  CHECK(std::abs(var_of(xs) - v) < 6.0 * v * std::sqrt(2.0 / (bs.n_draws - 1)));
}

TEST_CASE("degenerate weights raise errors naming the time") {
  const Ar1Spec spec = default_ar1(3);
  auto m = ar1_fk(spec);
  m.log_potential = [](int t, const double* x) {
    if (t == 1) return -kInf;
    const double d = *x;
    return -0.5 * d * d;
  };
  try {
    dsmc::run_particle_filter(m, 16, dsmc::Resampler::multinomial, 1);
    FAIL("expected a degeneracy error at time 1");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("time 1") != std::string::npos);
  }

  // Backward degeneracy: every stored ancestor is incompatible with the
  // selected endpoint under a hard-support transition.
  auto gate = ar1_fk(default_ar1(1));
  gate.transition_logdensity = [](int, const double* xp, const double* xc) {
    return (*xp > 0.0 && *xc > 0.0) ? 0.0 : -kInf;
  };
  gate.transition_row_factory = nullptr;
  dsmc::FilterOutput fo;
  fo.horizon = 1;
  fo.n = 2;
  fo.dim = 1;
  fo.particles = {-1.0, -2.0, 5.0, 6.0};  // t=0 both negative, t=1 positive
  const double lw = -std::log(2.0);
  fo.log_w = {lw, lw, lw, lw};
  fo.ancestors = {0, 1};
  try {
    dsmc::ffbs_sample(gate, fo, 4, 2);
    FAIL("expected a backward degeneracy error at time 0");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("time 0") != std::string::npos);
  }
}

TEST_CASE("filter rejects lazy resamplers and empty populations") {
  const auto m = ar1_fk(default_ar1(2));
  CHECK_THROWS_AS(
      dsmc::run_particle_filter(m, 8, dsmc::Resampler::mh_lazy, 0),
      std::invalid_argument);
  CHECK_THROWS_AS(
      dsmc::run_particle_filter(m, 8, dsmc::Resampler::rejection_lazy, 0),
      std::invalid_argument);
  CHECK_THROWS_AS(
      dsmc::run_particle_filter(m, 0, dsmc::Resampler::multinomial, 0),
      std::invalid_argument);
}

TEST_CASE("filter and backward passes are deterministic in the seed") {
  const auto m = ar1_fk(default_ar1(5));
  auto f1 = dsmc::run_particle_filter(m, 128, dsmc::Resampler::systematic, 42);
  auto f2 = dsmc::run_particle_filter(m, 128, dsmc::Resampler::systematic, 42);
  CHECK(f1.log_likelihood == f2.log_likelihood);
  CHECK(f1.particles == f2.particles);
  CHECK(f1.ancestors == f2.ancestors);

  auto b1 = dsmc::ffbs_sample(m, f1, 32, 7);
  auto b2 = dsmc::ffbs_sample(m, f2, 32, 7);
  CHECK(b1.paths == b2.paths);

  auto f3 = dsmc::run_particle_filter(m, 128, dsmc::Resampler::systematic, 43);
  CHECK(f3.log_likelihood != f1.log_likelihood);
}
