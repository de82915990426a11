#pragma once

#include <cstdint>
#include <vector>

#include "dsmc/fk_model.hpp"
#include "dsmc/kalman.hpp"

// The benchmark state-space models driven by the experiment harness, each
// packaged as a FeynmanKacModel with independent per-time proposals. All are
// one-dimensional. Builders precompute whatever the dense stitch rows need so
// combines run through the batched Gaussian kernels, and they expose a
// rejection bound only where the stitch ratio genuinely has a finite sup.

namespace dsmc {

// A per-time Gaussian proposal/auxiliary marginal.
struct ProposalMarginal {
  double mean = 0.0;
  double var = 1.0;
};

// Extract per-time smoothing marginals (first coordinate) from an exact or
// linearized smoother run; `inflation` scales the variances to guard against
// over-confident proposals.
std::vector<ProposalMarginal> proposal_marginals(const KalmanResult& kr,
                                                 double inflation = 1.0);

// --------------------------------------------------------------------------
// Log-Gaussian Cox counts over an AR(1) intensity:
//   x_0 ~ N(mu, sigma2 / (1 - rho^2))
//   x_t = mu + rho (lambda x_{t-1} - mu) + N(0, sigma2)
//   y_t ~ Poisson(exp(x_t))
// Proposals and auxiliary targets are the stationary law of the dynamics, so
// leaf weights at t >= 1 are uniform and the t = 0 weight is the Poisson
// potential alone. The stitch ratio p h / nu is unbounded (as x -> -inf the
// potential for y = 0 tends to 1 while 1 / nu explodes), so this model never
// offers a rejection bound.

struct CoxParams {
  double mu = 0.0;
  double rho = 0.9;
  double sigma2 = 0.25;  // transition noise variance
  double lambda = 1.0;   // damping of the lagged state inside the mean
};

// Requires |rho * lambda| < 1 and sigma2 > 0; ys.size() == T + 1 sets the
// horizon. Counts must be nonnegative integers stored as doubles.
FeynmanKacModel make_cox_model(const CoxParams& p,
                               const std::vector<double>& ys);

// Derivative of the joint log-density in sigma2, as a pathwise functional:
//   -(T+1)/(2 s2) + (1-rho^2)/(2 s2^2) (x_0 - mu)^2
//   + 1/(2 s2^2) sum_{s=1}^T {x_s - mu - rho (x_{s-1} - mu)}^2.
double cox_score(const CoxParams& p, const double* path, int horizon);

struct CoxData {
  std::vector<double> xs, ys;  // T + 1 each
};
CoxData simulate_cox(const CoxParams& p, int horizon, std::uint64_t seed);

// --------------------------------------------------------------------------
// Gaussian random walk conditioned to stay in [-1, 1]:
//   x_0 ~ N(0, 1),  x_t = x_{t-1} + N(0, sigma^2),  h_t = 1_{[-1,1]}(x_t).
// Proposals and auxiliary targets are U([-1, 1]), so the stitch weight is
// bounded by 2 / sqrt(2 pi sigma^2) and rejection stitching applies.

FeynmanKacModel make_constrained_rw(double sigma, int horizon);

// Scale score of the walk, up to a constant:
//   log(sigma) + sigma^{-3} sum_{t=1}^T (x_t - x_{t-1})^2.
double rw_score(double sigma, const double* path, int horizon);

// --------------------------------------------------------------------------
// Theta-logistic population dynamics:
//   x_0 ~ N(0, 1)
//   x_t = x_{t-1} + tau0 - tau1 exp(tau2 x_{t-1}) + N(0, q2)
//   y_t = x_t + N(0, r2)
// Proposals and auxiliary targets are externally supplied Gaussian smoothing
// marginals (from iterated_smooth). The potential/auxiliary ratio h/nu stays
// bounded only when the proposal tail is at least as fat as the likelihood's,
// i.e. every stitch-time variance exceeds r2; smoothing marginals are tighter
// than that, so the builder exposes a rejection bound only for deliberately
// widened proposals.

struct ThetaLogisticParams {
  double tau0 = 0.15;
  double tau1 = 0.10;
  double tau2 = 0.10;
  double q2 = 0.05;  // transition noise variance
  double r2 = 0.05;  // observation noise variance
};

// The additive-noise nonlinear form consumed by iterated_smooth.
NonlinearGaussianModel theta_logistic_nonlinear(const ThetaLogisticParams& p,
                                                const std::vector<double>& ys);

// Requires q2, r2 > 0, ys.size() == marginals.size() == T + 1, and positive
// marginal variances.
FeynmanKacModel make_theta_logistic(const ThetaLogisticParams& p,
                                    const std::vector<double>& ys,
                                    const std::vector<ProposalMarginal>& marginals);

struct ThetaLogisticData {
  std::vector<double> xs, ys;  // T + 1 each
};
ThetaLogisticData simulate_theta_logistic(const ThetaLogisticParams& p,
                                          int horizon, std::uint64_t seed);

// --------------------------------------------------------------------------
// One-dimensional linear-Gaussian model wrapped as a FeynmanKacModel, with
// proposals/auxiliary targets from supplied marginals (normally the exact
// smoothing marginals). The end-to-end cross-check against kalman_smooth.
// A rejection bound is exposed only when every stitch time carries an
// observation and the proposal there is wider than the likelihood curvature
// (variance above R_t / H_t^2).
FeynmanKacModel make_lgssm_fk(const LinearGaussianModel& m,
                              const std::vector<ProposalMarginal>& marginals);

}  // namespace dsmc
