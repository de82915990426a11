#include "dsmc/pgibbs.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dsmc/kalman.hpp"

namespace dsmc {

namespace {

double log_normal_pdf(double x, double mean, double var) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
}

}  // namespace

SweepOutcome pgibbs_sweep(const GibbsState& state,
                          const GibbsModelBuilder& model_builder,
                          const ParamKernel& param_kernel,
                          const ConditionalOptions& options,
                          std::uint32_t sweep) {
  if (!model_builder || !param_kernel)
    throw std::invalid_argument("pgibbs_sweep: missing kernel or builder");
  if (state.star.empty())
    throw std::invalid_argument("pgibbs_sweep: empty reference path");

  // Work on a private copy; the caller's state survives any throw below.
  SweepOutcome out;
  out.state = state;

  RngStream pstream({options.seed, 0, sweep, StreamRole::gibbs_param});
  param_kernel(out.state, pstream);

  FeynmanKacModel model = model_builder(out.state);
  const std::size_t want = static_cast<std::size_t>(model.horizon + 1) *
                           static_cast<std::size_t>(model.state_dim);
  if (out.state.star.size() != want)
    throw std::invalid_argument(
        "pgibbs_sweep: reference path does not match the model shape");

  ConditionalResult res =
      run_conditional(model, out.state.star.data(), options, sweep);
  out.changed = path_changed_times(out.state.star.data(), res.path.data(),
                                   model.horizon + 1, model.state_dim);
  out.state.star = std::move(res.path);
  out.meta = std::move(res.meta);
  return out;
}

std::vector<double> update_rate(const std::vector<std::vector<double>>& stars,
                                int dim) {
  if (stars.size() < 2)
    throw std::invalid_argument("update_rate: need at least two stars");
  if (dim < 1) throw std::invalid_argument("update_rate: dim must be >= 1");
  const std::size_t len = stars.front().size() / static_cast<std::size_t>(dim);
  if (len * static_cast<std::size_t>(dim) != stars.front().size())
    throw std::invalid_argument("update_rate: star size not divisible by dim");
  for (const auto& s : stars)
    if (s.size() != stars.front().size())
      throw std::invalid_argument("update_rate: stars differ in shape");

  std::vector<double> rate(len, 0.0);
  for (std::size_t k = 1; k < stars.size(); ++k) {
    auto mask = path_changed_times(stars[k - 1].data(), stars[k].data(),
                                   static_cast<int>(len), dim);
    for (std::size_t t = 0; t < len; ++t) rate[t] += mask[t] ? 1.0 : 0.0;
  }
  const double pairs = static_cast<double>(stars.size() - 1);
  for (auto& r : rate) r /= pairs;
  return rate;
}

double gamma_draw(double shape, double rate, RngStream& stream) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("gamma_draw: shape and rate must be > 0");
  // Marsaglia-Tsang squeeze; the shape < 1 case boosts and rescales.
  double boost = 1.0;
  if (shape < 1.0) {
    boost = std::pow(stream.uniform_pos(), 1.0 / shape);
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = stream.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = stream.uniform_pos();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
      return boost * d * v / rate;
  }
}

// ---------------------------------------------------------------------------
// Theta-logistic driver.

namespace {

double drift(const ThetaLogisticParams& p, double x) {
  return x + p.tau0 - p.tau1 * std::exp(p.tau2 * x);
}

// log p(tau) + log p(x_0) + log N(y_0; x_0, r2) + sum_t log N(x_t; f(x_{t-1}), q2):
// every term of the joint density that moves with (tau, x_0) at fixed
// precisions and fixed x_{1:T}.
double rwm_log_target(const ThetaLogisticParams& p, double x0,
                      const std::vector<double>& ys,
                      const std::vector<double>& star,
                      const ThetaLogisticGibbsConfig& cfg) {
  if (p.tau1 <= 0.0 || p.tau2 <= 0.0)
    return -std::numeric_limits<double>::infinity();
  double acc = log_normal_pdf(p.tau0, 0.0, cfg.tau0_sd * cfg.tau0_sd) +
               log_normal_pdf(p.tau1, 0.0, cfg.tau1_sd * cfg.tau1_sd) +
               log_normal_pdf(p.tau2, 0.0, cfg.tau2_sd * cfg.tau2_sd);
  acc += log_normal_pdf(x0, 0.0, 1.0);
  acc += log_normal_pdf(ys[0], x0, p.r2);
  double prev = x0;
  for (std::size_t t = 1; t < star.size(); ++t) {
    acc += log_normal_pdf(star[t], drift(p, prev), p.q2);
    prev = star[t];
  }
  return acc;
}

struct ThetaPack {
  static constexpr std::size_t kSize = 5;
  static std::vector<double> pack(const ThetaLogisticParams& p) {
    return {p.tau0, p.tau1, p.tau2, p.q2, p.r2};
  }
  static ThetaLogisticParams unpack(const std::vector<double>& v) {
    if (v.size() != kSize)
      throw std::invalid_argument("theta vector has the wrong size");
    ThetaLogisticParams p;
    p.tau0 = v[0];
    p.tau1 = v[1];
    p.tau2 = v[2];
    p.q2 = v[3];
    p.r2 = v[4];
    return p;
  }
};

}  // namespace

ThetaLogisticParams draw_precisions(const ThetaLogisticParams& params,
                                    const std::vector<double>& ys,
                                    const std::vector<double>& star,
                                    const ThetaLogisticGibbsConfig& config,
                                    RngStream& stream) {
  if (star.size() != ys.size() || star.empty())
    throw std::invalid_argument(
        "draw_precisions: path and observations must have equal length");
  const std::size_t T = star.size() - 1;

  double ss_x = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const double r = star[t] - drift(params, star[t - 1]);
    ss_x += r * r;
  }
  double ss_y = 0.0;
  for (std::size_t t = 0; t <= T; ++t) {
    const double r = ys[t] - star[t];
    ss_y += r * r;
  }

  ThetaLogisticParams out = params;
  const double prec_x =
      gamma_draw(config.prec_x_shape + 0.5 * static_cast<double>(T),
                 config.prec_x_rate + 0.5 * ss_x, stream);
  const double prec_y =
      gamma_draw(config.prec_y_shape + 0.5 * static_cast<double>(T + 1),
                 config.prec_y_rate + 0.5 * ss_y, stream);
  out.q2 = 1.0 / prec_x;
  out.r2 = 1.0 / prec_y;
  return out;
}

ThetaLogisticChain run_theta_logistic_pgibbs(
    const std::vector<double>& ys, const ThetaLogisticParams& init,
    const ThetaLogisticGibbsConfig& config, std::size_t sweeps,
    std::uint64_t seed) {
  if (ys.size() < 2)
    throw std::invalid_argument(
        "run_theta_logistic_pgibbs: need at least two observations");
  if (!(init.q2 > 0.0) || !(init.r2 > 0.0) || init.tau1 <= 0.0 ||
      init.tau2 <= 0.0)
    throw std::invalid_argument(
        "run_theta_logistic_pgibbs: initial parameters outside the prior "
        "support");
  if (config.ieks_cold_iterations < 1)
    throw std::invalid_argument(
        "run_theta_logistic_pgibbs: need at least one cold-start iteration");

  // Cold start: full linearized smoothing at the initial parameters; the
  // retained path starts at the smoothed means.
  GibbsState state;
  state.theta = ThetaPack::pack(init);
  {
    auto nl = theta_logistic_nonlinear(init, ys);
    auto it = iterated_smooth(nl, config.ieks_cold_iterations);
    state.proposal_cache =
        proposal_marginals(it.kr, config.proposal_inflation);
    state.ieks_ref = it.ref;
    state.star.resize(ys.size());
    for (std::size_t t = 0; t < ys.size(); ++t)
      state.star[t] = it.kr.smooth_mean[t](0);
  }

  ConditionalOptions copts;
  copts.n_particles = config.n_particles;
  copts.resampler = config.resampler;
  copts.seed = seed;

  ThetaLogisticChain chain;

  // The parameter kernel: conjugate precision draws, then one joint
  // random-walk Metropolis move on (tau0, tau1, tau2, x_0) with the proposal
  // outside the positivity constraints rejected outright.
  std::size_t* accepts_slot = &chain.rwm_accepts;
  ParamKernel kernel = [&ys, &config, accepts_slot](GibbsState& s,
                                                    RngStream& stream) {
    ThetaLogisticParams p = ThetaPack::unpack(s.theta);
    p = draw_precisions(p, ys, s.star, config, stream);

    ThetaLogisticParams prop = p;
    prop.tau0 = p.tau0 + config.rwm_step_tau * stream.normal();
    prop.tau1 = p.tau1 + config.rwm_step_tau * stream.normal();
    prop.tau2 = p.tau2 + config.rwm_step_tau * stream.normal();
    const double x0 = s.star[0];
    const double x0_prop = x0 + config.rwm_step_x0 * stream.normal();
    const double delta = rwm_log_target(prop, x0_prop, ys, s.star, config) -
                         rwm_log_target(p, x0, ys, s.star, config);
    if (std::log(stream.uniform_pos()) < delta) {
      p = prop;
      s.star[0] = x0_prop;
      ++*accepts_slot;
    }
    s.theta = ThetaPack::pack(p);
  };

  // The model builder: one warm-started linearization step at the new
  // parameters refreshes the proposal marginals.
  GibbsModelBuilder builder = [&ys, &config](GibbsState& s) {
    ThetaLogisticParams p = ThetaPack::unpack(s.theta);
    auto nl = theta_logistic_nonlinear(p, ys);
    auto it = iterated_smooth(nl, 1, &s.ieks_ref);
    s.proposal_cache = proposal_marginals(it.kr, config.proposal_inflation);
    s.ieks_ref = it.ref;
    return make_theta_logistic(p, ys, s.proposal_cache);
  };

  chain.thetas.reserve(sweeps);
  chain.stars.reserve(sweeps);
  chain.changed.reserve(sweeps);
  for (std::size_t s = 1; s <= sweeps; ++s) {
    SweepOutcome out = pgibbs_sweep(state, builder, kernel, copts,
                                    static_cast<std::uint32_t>(s));
    state = std::move(out.state);
    chain.thetas.push_back(ThetaPack::unpack(state.theta));
    chain.stars.push_back(state.star);
    chain.changed.push_back(std::move(out.changed));
    chain.weight_evals += out.meta.weight_evals;
  }
  return chain;
}

}  // namespace dsmc
