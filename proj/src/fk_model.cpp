#include "dsmc/fk_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dsmc {

namespace {

void check_time(int t, int horizon, int lo, const char* what) {
  if (t < lo || t > horizon)
    throw std::invalid_argument(std::string(what) + ": time index " +
                                std::to_string(t) + " outside [" +
                                std::to_string(lo) + ", " +
                                std::to_string(horizon) + "]");
}

double checked(double v, const char* what) {
  if (std::isnan(v))
    throw std::invalid_argument(std::string(what) + " produced NaN");
  return v;
}

}  // namespace

void validate_model(const FeynmanKacModel& model) {
  if (model.state_dim < 1)
    throw std::invalid_argument("model: state_dim must be >= 1");
  if (model.horizon < 0)
    throw std::invalid_argument("model: horizon must be >= 0");
  if (!model.proposal_sampler || !model.proposal_logdensity ||
      !model.log_potential || !model.init_logdensity)
    throw std::invalid_argument(
        "model: proposal sampler/density, potential and initial density are "
        "required");
  if (model.horizon >= 1 &&
      (!model.aux_logdensity || !model.transition_logdensity))
    throw std::invalid_argument(
        "model: aux density and transition density are required for T >= 1");
}

double log_init_weight(const FeynmanKacModel& model, int t, const double* x) {
  check_time(t, model.horizon, 0, "log_init_weight");
  double w;
  if (t == 0) {
    const double pot = model.log_potential(0, x);
    const double p0 = model.init_logdensity(x);
    const double q = model.proposal_logdensity(0, x);
    w = pot + p0 - q;
    // h_0 = 0 off-support must win over any q underflow
    if (pot == -INFINITY || p0 == -INFINITY) w = -INFINITY;
  } else {
    const double nu = model.aux_logdensity(t, x);
    const double q = model.proposal_logdensity(t, x);
    w = nu == -INFINITY ? -INFINITY : nu - q;
  }
  return checked(w, "log_init_weight");
}

double log_stitch_weight(const FeynmanKacModel& model, int c,
                         const double* x_prev, const double* x_cur) {
  check_time(c, model.horizon, 1, "log_stitch_weight");
  const double trans = model.transition_logdensity(c, x_prev, x_cur);
  const double pot = model.log_potential(c, x_cur);
  if (trans == -INFINITY || pot == -INFINITY) return -INFINITY;
  const double nu = model.aux_logdensity(c, x_cur);
  if (nu == -INFINITY)
    throw std::invalid_argument(
        "log_stitch_weight: aux density vanishes where transition*potential "
        "does not (nu_c must dominate)");
  return checked(trans + pot - nu, "log_stitch_weight");
}

StitchRowFn make_stitch_row(const FeynmanKacModel& model, int c,
                            const double* right_particles, std::size_t n) {
  check_time(c, model.horizon, 1, "make_stitch_row");
  if (model.stitch_row_factory)
    return model.stitch_row_factory(c, right_particles, n);
  const int d = model.state_dim;
  return [&model, c, right_particles, n, d](const double* x_prev,
                                            double* out) {
    for (std::size_t j = 0; j < n; ++j)
      out[j] = log_stitch_weight(model, c, x_prev, right_particles + j * d);
  };
}

TransitionRowFn make_transition_row(const FeynmanKacModel& model, int t,
                                    const double* prev_particles,
                                    std::size_t n) {
  check_time(t, model.horizon, 1, "make_transition_row");
  if (model.transition_row_factory)
    return model.transition_row_factory(t, prev_particles, n);
  const int d = model.state_dim;
  return [&model, t, prev_particles, n, d](const double* x_cur, double* out) {
    for (std::size_t j = 0; j < n; ++j)
      out[j] = model.transition_logdensity(t, prev_particles + j * d, x_cur);
  };
}

void leaf_weights(const FeynmanKacModel& model, int t, const double* particles,
                  std::size_t n, double* out) {
  check_time(t, model.horizon, 0, "leaf_weights");
  if (model.init_weight_batch) {
    model.init_weight_batch(t, particles, n, out);
    for (std::size_t i = 0; i < n; ++i) checked(out[i], "init_weight_batch");
    return;
  }
  const int d = model.state_dim;
  for (std::size_t i = 0; i < n; ++i)
    out[i] = log_init_weight(model, t, particles + i * d);
}

}  // namespace dsmc
