#include "dsmc/kalman.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dsmc {
namespace {

void symmetrize(Eigen::MatrixXd& P) { P = ((P + P.transpose()) * 0.5).eval(); }

// Cholesky with an escalating diagonal jitter; Gaussian conditionals computed
// from finite-precision smoothing recursions can sit a hair below PSD.
Eigen::LLT<Eigen::MatrixXd> robust_llt(Eigen::MatrixXd P, const char* what) {
  symmetrize(P);
  const double scale = std::max(P.trace() / P.rows(), 1e-300);
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    if (llt.info() == Eigen::Success) return llt;
    P += (scale * std::pow(10.0, attempt - 12)) *
         Eigen::MatrixXd::Identity(P.rows(), P.cols());
  }
  throw std::runtime_error(std::string(what) +
                           ": covariance is not positive definite");
}

double log_gaussian(const Eigen::VectorXd& resid,
                    const Eigen::LLT<Eigen::MatrixXd>& lltS) {
  const auto& L = lltS.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < resid.size(); ++i) log_det += 2.0 * std::log(L(i, i));
  const Eigen::VectorXd z = lltS.matrixL().solve(resid);
  return -0.5 * (resid.size() * std::log(2.0 * std::numbers::pi) + log_det +
                 z.squaredNorm());
}

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Eigen::VectorXd draw_gaussian(const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov, RngStream& stream,
                              const char* what) {
  auto llt = robust_llt(cov, what);
  Eigen::VectorXd z(mean.size());
  stream.fill_normal(z.data(), static_cast<std::size_t>(z.size()));
  return mean + llt.matrixL() * z;
}

}  // namespace

void validate_lgssm(const LinearGaussianModel& m) {
  require(m.dim_x >= 1 && m.dim_y >= 1, "lgssm: dimensions must be positive");
  require(m.horizon >= 0, "lgssm: horizon must be nonnegative");
  const auto T = static_cast<std::size_t>(m.horizon);
  require(m.m0.size() == m.dim_x && m.P0.rows() == m.dim_x &&
              m.P0.cols() == m.dim_x,
          "lgssm: initial moments have the wrong shape");
  require(m.F.size() == T + 1 && m.b.size() == T + 1 && m.Q.size() == T + 1,
          "lgssm: transition arrays must have horizon+1 entries");
  require(m.H.size() == T + 1 && m.R.size() == T + 1 && m.y.size() == T + 1 &&
              m.has_obs.size() == T + 1,
          "lgssm: observation arrays must have horizon+1 entries");
  for (std::size_t t = 1; t <= T; ++t) {
    require(m.F[t].rows() == m.dim_x && m.F[t].cols() == m.dim_x &&
                m.b[t].size() == m.dim_x && m.Q[t].rows() == m.dim_x,
            "lgssm: transition shapes are inconsistent");
  }
  for (std::size_t t = 0; t <= T; ++t) {
    if (!m.has_obs[t]) continue;
    require(m.H[t].rows() == m.dim_y && m.H[t].cols() == m.dim_x &&
                m.R[t].rows() == m.dim_y && m.y[t].size() == m.dim_y,
            "lgssm: observation shapes are inconsistent");
  }
}

KalmanResult kalman_smooth(const LinearGaussianModel& m) {
  validate_lgssm(m);
  const int T = m.horizon;
  const int d = m.dim_x;
  KalmanResult kr;
  kr.pred_mean.resize(T + 1);
  kr.pred_cov.resize(T + 1);
  kr.filt_mean.resize(T + 1);
  kr.filt_cov.resize(T + 1);
  kr.smooth_mean.resize(T + 1);
  kr.smooth_cov.resize(T + 1);
  kr.gain.assign(T + 1, Eigen::MatrixXd());

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  for (int t = 0; t <= T; ++t) {
    if (t == 0) {
      kr.pred_mean[0] = m.m0;
      kr.pred_cov[0] = m.P0;
    } else {
      kr.pred_mean[t] = m.F[t] * kr.filt_mean[t - 1] + m.b[t];
      kr.pred_cov[t] =
          m.F[t] * kr.filt_cov[t - 1] * m.F[t].transpose() + m.Q[t];
      symmetrize(kr.pred_cov[t]);
    }
    if (m.has_obs[t]) {
      const Eigen::VectorXd resid = m.y[t] - m.H[t] * kr.pred_mean[t];
      Eigen::MatrixXd S =
          m.H[t] * kr.pred_cov[t] * m.H[t].transpose() + m.R[t];
      auto lltS = robust_llt(S, "kalman update");
      kr.log_likelihood += log_gaussian(resid, lltS);
      const Eigen::MatrixXd K =
          lltS.solve(m.H[t] * kr.pred_cov[t]).transpose();
      kr.filt_mean[t] = kr.pred_mean[t] + K * resid;
      const Eigen::MatrixXd A = I - K * m.H[t];
      kr.filt_cov[t] = A * kr.pred_cov[t] * A.transpose() +
                       K * m.R[t] * K.transpose();  // Joseph form
      symmetrize(kr.filt_cov[t]);
    } else {
      kr.filt_mean[t] = kr.pred_mean[t];
      kr.filt_cov[t] = kr.pred_cov[t];
    }
  }

  kr.smooth_mean[T] = kr.filt_mean[T];
  kr.smooth_cov[T] = kr.filt_cov[T];
  for (int t = T - 1; t >= 0; --t) {
    auto llt_pred = robust_llt(kr.pred_cov[t + 1], "rts gain");
    // G = P_t F' (P_pred)^{-1}, computed as solving from the right.
    kr.gain[t] =
        llt_pred.solve(m.F[t + 1] * kr.filt_cov[t].transpose()).transpose();
    kr.smooth_mean[t] =
        kr.filt_mean[t] +
        kr.gain[t] * (kr.smooth_mean[t + 1] - kr.pred_mean[t + 1]);
    kr.smooth_cov[t] =
        kr.filt_cov[t] + kr.gain[t] *
                             (kr.smooth_cov[t + 1] - kr.pred_cov[t + 1]) *
                             kr.gain[t].transpose();
    symmetrize(kr.smooth_cov[t]);
  }
  return kr;
}

std::vector<Eigen::VectorXd> posterior_joint_sample(const LinearGaussianModel& m,
                                                    const KalmanResult& kr,
                                                    RngStream& stream) {
  const int T = m.horizon;
  std::vector<Eigen::VectorXd> x(T + 1);
  x[T] = draw_gaussian(kr.filt_mean[T], kr.filt_cov[T], stream, "joint draw");
  for (int t = T - 1; t >= 0; --t) {
    const Eigen::VectorXd mean =
        kr.filt_mean[t] + kr.gain[t] * (x[t + 1] - kr.pred_mean[t + 1]);
    Eigen::MatrixXd cov =
        kr.filt_cov[t] -
        kr.gain[t] * kr.pred_cov[t + 1] * kr.gain[t].transpose();
    x[t] = draw_gaussian(mean, cov, stream, "joint draw");
  }
  return x;
}

LgssmSample simulate_lgssm(const LinearGaussianModel& m, RngStream& stream) {
  validate_lgssm(m);
  const int T = m.horizon;
  LgssmSample out;
  out.x.resize(T + 1);
  out.y.resize(T + 1);
  out.x[0] = draw_gaussian(m.m0, m.P0, stream, "simulate");
  for (int t = 1; t <= T; ++t) {
    out.x[t] = draw_gaussian(m.F[t] * out.x[t - 1] + m.b[t], m.Q[t], stream,
                             "simulate");
  }
  for (int t = 0; t <= T; ++t) {
    if (m.has_obs[t])
      out.y[t] =
          draw_gaussian(m.H[t] * out.x[t], m.R[t], stream, "simulate");
  }
  return out;
}

Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
    const Eigen::VectorXd& x) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd probe = fn(x);
  Eigen::MatrixXd J(probe.size(), d);
  for (int i = 0; i < d; ++i) {
    const double h = 1e-6 * (1.0 + std::fabs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (fn(xp) - fn(xm)) / (2.0 * h);
  }
  return J;
}

LinearGaussianModel linearize(const NonlinearGaussianModel& m,
                              const std::vector<Eigen::VectorXd>& ref) {
  if (static_cast<int>(ref.size()) != m.horizon + 1)
    throw std::invalid_argument("linearize: reference length != horizon+1");
  LinearGaussianModel lin;
  lin.dim_x = m.dim_x;
  lin.dim_y = m.dim_y;
  lin.horizon = m.horizon;
  lin.m0 = m.m0;
  lin.P0 = m.P0;
  lin.F.resize(m.horizon + 1);
  lin.b.resize(m.horizon + 1);
  lin.Q = m.Q;
  lin.H = m.H;
  lin.R = m.R;
  lin.y = m.y;
  lin.has_obs = m.has_obs;
  for (int t = 1; t <= m.horizon; ++t) {
    const Eigen::VectorXd& r = ref[t - 1];
    lin.F[t] = m.f_jac ? m.f_jac(t, r)
                       : numeric_jacobian(
                             [&](const Eigen::VectorXd& v) { return m.f(t, v); },
                             r);
    lin.b[t] = m.f(t, r) - lin.F[t] * r;
  }
  return lin;
}

IteratedSmoothResult iterated_smooth(
    const NonlinearGaussianModel& m, int iterations,
    const std::vector<Eigen::VectorXd>* initial_ref) {
  if (iterations < 1)
    throw std::invalid_argument("iterated_smooth: iterations must be >= 1");
  std::vector<Eigen::VectorXd> ref;
  if (initial_ref) {
    ref = *initial_ref;
  } else {
    ref.resize(m.horizon + 1);
    ref[0] = m.m0;
    for (int t = 1; t <= m.horizon; ++t) ref[t] = m.f(t, ref[t - 1]);
  }

  IteratedSmoothResult out;
  for (int it = 0; it < iterations; ++it) {
    out.linearized = linearize(m, ref);
    out.kr = kalman_smooth(out.linearized);
    ref = out.kr.smooth_mean;
    out.iterations = it + 1;
  }
  out.ref = ref;
  return out;
}

}  // namespace dsmc
