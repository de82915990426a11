#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dsmc/conditional.hpp"
#include "dsmc/models.hpp"
#include "dsmc/rng.hpp"

// Particle Gibbs on top of the conditional tree sweep: alternate a parameter
// kernel (which must leave p(theta | path, data) invariant) with one
// conditional path update at the new parameters. The generic sweep works on a
// small state record and commits only on success, so any mid-sweep failure
// leaves the caller's state untouched. A concrete driver for the
// theta-logistic model supplies conjugate precision updates, a joint
// random-walk Metropolis step on the drift parameters and the initial state,
// and warm-started linearized proposals.

namespace dsmc {

// One Gibbs chain's mutable state: parameters, the retained path (flat
// (T+1) * dim), and the proposal machinery carried between sweeps (the
// per-time Gaussian proposals and the linearization reference that
// warm-starts the next refresh; both empty until a model builder fills them).
struct GibbsState {
  std::vector<double> theta;
  std::vector<double> star;
  std::vector<ProposalMarginal> proposal_cache;
  std::vector<Eigen::VectorXd> ieks_ref;
};

// Updates theta (and may move the path coordinates it treats as parameters,
// e.g. the initial state) in place; must leave the conditional posterior of
// those coordinates invariant. Throwing aborts the sweep.
using ParamKernel = std::function<void(GibbsState&, RngStream&)>;

// Builds the path model at the state's current parameters; may refresh
// proposal_cache / ieks_ref (the state it receives is the sweep's private
// copy). Throwing aborts the sweep.
using GibbsModelBuilder = std::function<FeynmanKacModel(GibbsState&)>;

struct SweepOutcome {
  GibbsState state;
  std::vector<char> changed;  // per-time: conditional sweep moved the path
  RunMetadata meta;
};

// One Gibbs sweep: parameter kernel, model rebuild, conditional path update.
// The kernel's stream is keyed {seed, 0, sweep, gibbs_param}; the conditional
// sweep is keyed by `sweep` as usual. Strong guarantee: on any throw the
// input state is still valid and unchanged.
SweepOutcome pgibbs_sweep(const GibbsState& state,
                          const GibbsModelBuilder& model_builder,
                          const ParamKernel& param_kernel,
                          const ConditionalOptions& options,
                          std::uint32_t sweep);

// rate[t] = fraction of consecutive stars whose time-t state differs;
// needs at least two stars of equal shape.
std::vector<double> update_rate(const std::vector<std::vector<double>>& stars,
                                int dim = 1);

// Gamma(shape, rate) draw (mean shape / rate); shape, rate > 0.
double gamma_draw(double shape, double rate, RngStream& stream);

// --------------------------------------------------------------------------
// Theta-logistic driver.

// Priors and kernel tuning. Defaults are desk-scale choices, not fitted to
// any reference analysis: Gamma(2, 1) on both precisions, N(0, 1) on tau0,
// half-normal(1) on tau1 and tau2 (both constrained positive), and the
// model's own N(0, 1) prior on the initial state.
struct ThetaLogisticGibbsConfig {
  double prec_x_shape = 2.0, prec_x_rate = 1.0;  // 1 / q2 ~ Gamma(shape, rate)
  double prec_y_shape = 2.0, prec_y_rate = 1.0;  // 1 / r2 ~ Gamma(shape, rate)
  double tau0_sd = 1.0;
  double tau1_sd = 1.0;
  double tau2_sd = 1.0;
  double rwm_step_tau = 0.05;  // proposal sd for each tau component
  double rwm_step_x0 = 0.1;    // proposal sd for the initial state
  std::size_t n_particles = 64;
  Resampler resampler = Resampler::multinomial;
  int ieks_cold_iterations = 25;  // chain start; one warm step per sweep after
  double proposal_inflation = 1.0;
};

// Conjugate Gamma draws of the two precisions given the retained path:
//   1/q2 | ... ~ Gamma(a_q + T/2,     b_q + sum_t (x_t - f(x_{t-1}))^2 / 2)
//   1/r2 | ... ~ Gamma(a_r + (T+1)/2, b_r + sum_t (y_t - x_t)^2 / 2)
// Returns params with q2, r2 replaced; taus untouched.
ThetaLogisticParams draw_precisions(const ThetaLogisticParams& params,
                                    const std::vector<double>& ys,
                                    const std::vector<double>& star,
                                    const ThetaLogisticGibbsConfig& config,
                                    RngStream& stream);

struct ThetaLogisticChain {
  std::vector<ThetaLogisticParams> thetas;  // per sweep, post-update
  std::vector<std::vector<double>> stars;   // retained path per sweep
  std::vector<std::vector<char>> changed;   // conditional renewal mask
  std::size_t rwm_accepts = 0;
  std::uint64_t weight_evals = 0;
};

// Full chain: 25-iteration linearized cold start at `init` (the retained path
// starts at the smoothed means), then `sweeps` Gibbs sweeps of {precision
// draws, joint RWM on (tau0, tau1, tau2, x_0), one warm proposal refresh,
// conditional path update}. Records are post-sweep snapshots.
ThetaLogisticChain run_theta_logistic_pgibbs(
    const std::vector<double>& ys, const ThetaLogisticParams& init,
    const ThetaLogisticGibbsConfig& config, std::size_t sweeps,
    std::uint64_t seed);

}  // namespace dsmc
