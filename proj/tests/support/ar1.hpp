#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dsmc/fk_model.hpp"
#include "dsmc/kalman.hpp"
#include "dsmc/kernels.hpp"

// Shared fixture: stationary AR(1) with Gaussian observations, as a tree-model
// and as its exact linear-Gaussian twin. Proposals and auxiliary densities are
// the stationary law; the stitch rows and backward rows use the batched
// Gaussian kernel.

namespace testsupport {

inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

struct Ar1Spec {
  double rho = 0.8;
  double q = 0.3;
  double r = 0.4;
  std::vector<double> ys;
  double s2() const { return q / (1.0 - rho * rho); }
};

inline dsmc::FeynmanKacModel ar1_fk(const Ar1Spec& p) {
  dsmc::FeynmanKacModel m;
  m.state_dim = 1;
  m.horizon = static_cast<int>(p.ys.size()) - 1;
  const double s2 = p.s2();
  const double rho = p.rho, q = p.q, r = p.r;
  const std::vector<double> ys = p.ys;
  m.proposal_sampler = [s2](int, std::size_t count, dsmc::RngStream& stream,
                            double* out) {
    stream.fill_normal(out, count);
    const double sd = std::sqrt(s2);
    for (std::size_t i = 0; i < count; ++i) out[i] *= sd;
  };
  m.proposal_logdensity = [s2](int, const double* x) {
    return log_normal_pdf(*x, 0.0, s2);
  };
  m.aux_logdensity = [s2](int, const double* x) {
    return log_normal_pdf(*x, 0.0, s2);
  };
  m.log_potential = [ys, r](int t, const double* x) {
    return log_normal_pdf(ys[t], *x, r);
  };
  m.transition_logdensity = [rho, q](int, const double* xp, const double* xc) {
    return log_normal_pdf(*xc, rho * *xp, q);
  };
  m.init_logdensity = [s2](const double* x) {
    return log_normal_pdf(*x, 0.0, s2);
  };
  m.transition_sampler = [rho, q](int, const double* xp,
                                  dsmc::RngStream& stream, double* out) {
    *out = rho * *xp + std::sqrt(q) * stream.normal();
  };
  m.stitch_row_factory = [ys, r, s2, rho, q](int c, const double* xr,
                                             std::size_t n) {
    std::vector<double> base(n);
    const double norm = -0.5 * std::log(2.0 * std::numbers::pi * q);
    for (std::size_t j = 0; j < n; ++j)
      base[j] = norm + log_normal_pdf(ys[c], xr[j], r) -
                log_normal_pdf(xr[j], 0.0, s2);
    std::vector<double> xr_copy(xr, xr + n);
    return [base = std::move(base), xr_copy = std::move(xr_copy), rho,
            q](const double* x_prev, double* out) {
      dsmc::kernels::gaussian_row(xr_copy.data(), xr_copy.size(),
                                  rho * *x_prev, -0.5 / q, base.data(), out);
    };
  };
  // log N(x_cur; rho * x_j, q) as a quadratic in x_j: shift the center to
  // x_cur / rho and scale the curvature by rho^2.
  m.transition_row_factory = [rho, q](int, const double* xp, std::size_t n) {
    std::vector<double> xp_copy(xp, xp + n);
    const double norm = -0.5 * std::log(2.0 * std::numbers::pi * q);
    return [xp_copy = std::move(xp_copy), rho, q,
            norm](const double* x_cur, double* out) {
      dsmc::kernels::gaussian_row(xp_copy.data(), xp_copy.size(),
                                  *x_cur / rho, -0.5 * rho * rho / q, nullptr,
                                  out);
      dsmc::kernels::add_vec_scalar(out, xp_copy.size(), norm, nullptr);
    };
  };
  m.log_stitch_bound = [ys, r, s2, q](int c) {
    const double vertex = (ys[c] / r) / (1.0 / r - 1.0 / s2);
    return -0.5 * std::log(2.0 * std::numbers::pi * q) +
           log_normal_pdf(ys[c], vertex, r) - log_normal_pdf(vertex, 0.0, s2);
  };
  return m;
}

inline dsmc::LinearGaussianModel ar1_exact(const Ar1Spec& p) {
  const int T = static_cast<int>(p.ys.size()) - 1;
  dsmc::LinearGaussianModel m;
  m.dim_x = 1;
  m.dim_y = 1;
  m.horizon = T;
  m.m0 = Eigen::VectorXd::Zero(1);
  m.P0 = Eigen::MatrixXd::Constant(1, 1, p.s2());
  m.F.assign(T + 1, Eigen::MatrixXd::Constant(1, 1, p.rho));
  m.b.assign(T + 1, Eigen::VectorXd::Zero(1));
  m.Q.assign(T + 1, Eigen::MatrixXd::Constant(1, 1, p.q));
  m.H.assign(T + 1, Eigen::MatrixXd::Identity(1, 1));
  m.R.assign(T + 1, Eigen::MatrixXd::Constant(1, 1, p.r));
  m.y.resize(T + 1);
  m.has_obs.assign(T + 1, 1);
  for (int t = 0; t <= T; ++t) m.y[t] = Eigen::VectorXd::Constant(1, p.ys[t]);
  return m;
}

inline Ar1Spec default_ar1(int horizon = 11) {
  Ar1Spec p;
  const std::vector<double> pool = {0.4,  -0.1, 0.9, 1.3,  0.2, -0.7,
                                    -0.2, 0.5,  1.1, 0.3,  -0.4, 0.1,
                                    0.8,  -0.9, 0.0, 0.6,  -0.3, 0.7,
                                    1.0,  -0.5, 0.2, -0.8, 0.35, 0.15};
  p.ys.resize(horizon + 1);
  for (int t = 0; t <= horizon; ++t) p.ys[t] = pool[t % pool.size()];
  return p;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double cov_of(const std::vector<double>& a,
                     const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

}  // namespace testsupport
