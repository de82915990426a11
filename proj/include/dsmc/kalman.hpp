#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "dsmc/rng.hpp"

// Exact Gaussian state-space machinery: Kalman filtering with Joseph-form
// updates, RTS smoothing, marginal log-likelihood, joint posterior draws, and
// iterated smoothing-based linearization of nonlinear dynamics. Serves two
// jobs: ground truth for linear-Gaussian checks, and the source of Gaussian
// proposal/auxiliary densities for nonlinear models.

namespace dsmc {

struct LinearGaussianModel {
  int dim_x = 1;
  int dim_y = 1;
  int horizon = 0;  // T; times run 0..T

  Eigen::VectorXd m0;
  Eigen::MatrixXd P0;

  // Transition into time t (t = 1..T): x_t = F[t] x_{t-1} + b[t] + N(0, Q[t]).
  // Index 0 is unused padding so indices line up with time.
  std::vector<Eigen::MatrixXd> F;
  std::vector<Eigen::VectorXd> b;
  std::vector<Eigen::MatrixXd> Q;

  // Observation at time t (t = 0..T) when has_obs[t]: y[t] = H[t] x_t + N(0, R[t]).
  std::vector<Eigen::MatrixXd> H;
  std::vector<Eigen::MatrixXd> R;
  std::vector<Eigen::VectorXd> y;
  std::vector<char> has_obs;
};

void validate_lgssm(const LinearGaussianModel& m);

struct KalmanResult {
  std::vector<Eigen::VectorXd> pred_mean, filt_mean, smooth_mean;
  std::vector<Eigen::MatrixXd> pred_cov, filt_cov, smooth_cov;
  // RTS gain G[t] couples t and t+1 (size T; index T unused padding). Also
  // yields the pairwise smoothing covariance Cov(x_t, x_{t+1}) = G[t] *
  // smooth_cov[t+1].
  std::vector<Eigen::MatrixXd> gain;
  double log_likelihood = 0.0;
};

KalmanResult kalman_smooth(const LinearGaussianModel& m);

// One exact draw from the joint smoothing posterior p(x_{0:T} | y): forward
// filter moments in, backward conditional sampling out.
std::vector<Eigen::VectorXd> posterior_joint_sample(const LinearGaussianModel& m,
                                                    const KalmanResult& kr,
                                                    RngStream& stream);

// Simulated trajectory and observations from the model itself.
struct LgssmSample {
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> y;
};
LgssmSample simulate_lgssm(const LinearGaussianModel& m, RngStream& stream);

// Nonlinear dynamics with additive Gaussian noise and linear-Gaussian
// observations: x_t = f(t, x_{t-1}) + N(0, Q[t]), y_t = H[t] x_t + N(0, R[t]).
struct NonlinearGaussianModel {
  int dim_x = 1;
  int dim_y = 1;
  int horizon = 0;

  Eigen::VectorXd m0;
  Eigen::MatrixXd P0;

  std::function<Eigen::VectorXd(int t, const Eigen::VectorXd&)> f;
  // Optional Jacobian of f in its state argument; central differences when
  // absent.
  std::function<Eigen::MatrixXd(int t, const Eigen::VectorXd&)> f_jac;
  std::vector<Eigen::MatrixXd> Q;

  std::vector<Eigen::MatrixXd> H;
  std::vector<Eigen::MatrixXd> R;
  std::vector<Eigen::VectorXd> y;
  std::vector<char> has_obs;
};

Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
    const Eigen::VectorXd& x);

// First-order expansion of the dynamics around a reference trajectory:
// F[t] = J[f](t, ref[t-1]), b[t] = f(t, ref[t-1]) - F[t] ref[t-1].
LinearGaussianModel linearize(const NonlinearGaussianModel& m,
                              const std::vector<Eigen::VectorXd>& ref);

struct IteratedSmoothResult {
  LinearGaussianModel linearized;  // at the final reference
  KalmanResult kr;
  std::vector<Eigen::VectorXd> ref;  // final reference = smoothed means
  int iterations = 0;
};

// Iterated linearization: smooth, re-linearize around the smoothed means,
// repeat. `initial_ref` warm-starts the reference (noise-free rollout of f
// from m0 otherwise).
IteratedSmoothResult iterated_smooth(
    const NonlinearGaussianModel& m, int iterations,
    const std::vector<Eigen::VectorXd>* initial_ref = nullptr);

}  // namespace dsmc
