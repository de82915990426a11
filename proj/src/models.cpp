#include "dsmc/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsmc/kernels.hpp"

namespace dsmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
}

// sup over x of a quadratic alpha x^2 + beta x + gamma; +inf when unbounded.
double quadratic_sup(double alpha, double beta, double gamma) {
  if (alpha < 0.0) return gamma - beta * beta / (4.0 * alpha);
  if (alpha == 0.0 && beta == 0.0) return gamma;
  return std::numeric_limits<double>::infinity();
}

// sup over x of log N(y; h x, r2) - log N(x; m, v). Finite iff the proposal
// tail dominates the likelihood's: v > r2 / h^2 (or equality with matching
// centers).
double obs_over_aux_sup(double y, double h, double r2, double m, double v) {
  const double alpha = 1.0 / (2.0 * v) - h * h / (2.0 * r2);
  const double beta = h * y / r2 - m / v;
  const double gamma =
      -y * y / (2.0 * r2) + m * m / (2.0 * v) + 0.5 * std::log(v / r2);
  return quadratic_sup(alpha, beta, gamma);
}

void check_finite_obs(const std::vector<double>& ys, const char* who) {
  for (double y : ys)
    if (!std::isfinite(y))
      throw std::invalid_argument(std::string(who) +
                                  ": observations must be finite");
}

// Exact Poisson draw: chunked so the Knuth product never underflows.
std::uint64_t poisson_draw(double rate, RngStream& stream) {
  if (!(rate >= 0.0))
    throw std::invalid_argument("poisson_draw: rate must be nonnegative");
  std::uint64_t total = 0;
  while (rate > 0.0) {
    const double chunk = std::min(rate, 30.0);
    rate -= chunk;
    const double limit = std::exp(-chunk);
    double prod = 1.0;
    std::uint64_t k = 0;
    do {
      ++k;
      prod *= stream.uniform_pos();
    } while (prod > limit);
    total += k - 1;
  }
  return total;
}

}  // namespace

std::vector<ProposalMarginal> proposal_marginals(const KalmanResult& kr,
                                                 double inflation) {
  if (!(inflation > 0.0))
    throw std::invalid_argument("proposal_marginals: inflation must be > 0");
  std::vector<ProposalMarginal> out(kr.smooth_mean.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t].mean = kr.smooth_mean[t](0);
    out[t].var = kr.smooth_cov[t](0, 0) * inflation;
    if (!(out[t].var > 0.0) || !std::isfinite(out[t].mean))
      throw std::invalid_argument(
          "proposal_marginals: degenerate smoothing marginal");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cox counts over an AR(1) intensity.

namespace {

struct CoxCtx {
  CoxParams p;
  std::vector<double> ys;
  std::vector<double> lgam;  // lgamma(y_t + 1)
  double slope = 0.0;        // rho * lambda
  double icept = 0.0;        // mu (1 - rho)
  double stat_mean = 0.0;
  double stat_var = 1.0;
  double trans_norm = 0.0;  // -0.5 log(2 pi sigma2)

  double log_poisson(int t, double x) const {
    return ys[static_cast<std::size_t>(t)] * x - std::exp(x) -
           lgam[static_cast<std::size_t>(t)];
  }
};

}  // namespace

FeynmanKacModel make_cox_model(const CoxParams& p,
                               const std::vector<double>& ys) {
  if (!(p.sigma2 > 0.0))
    throw std::invalid_argument("make_cox_model: sigma2 must be > 0");
  if (!(std::abs(p.rho * p.lambda) < 1.0))
    throw std::invalid_argument("make_cox_model: need |rho * lambda| < 1");
  if (ys.empty())
    throw std::invalid_argument("make_cox_model: observations are empty");
  check_finite_obs(ys, "make_cox_model");
  for (double y : ys)
    if (y < 0.0 || std::floor(y) != y)
      throw std::invalid_argument(
          "make_cox_model: counts must be nonnegative integers");

  auto ctx = std::make_shared<CoxCtx>();
  ctx->p = p;
  ctx->ys = ys;
  ctx->lgam.resize(ys.size());
  for (std::size_t t = 0; t < ys.size(); ++t)
    ctx->lgam[t] = std::lgamma(ys[t] + 1.0);
  ctx->slope = p.rho * p.lambda;
  ctx->icept = p.mu * (1.0 - p.rho);
  ctx->stat_mean = ctx->icept / (1.0 - ctx->slope);
  ctx->stat_var = p.sigma2 / (1.0 - ctx->slope * ctx->slope);
  ctx->trans_norm = -0.5 * (kLog2Pi + std::log(p.sigma2));

  FeynmanKacModel m;
  m.state_dim = 1;
  m.horizon = static_cast<int>(ys.size()) - 1;

  m.proposal_sampler = [ctx](int, std::size_t count, RngStream& stream,
                             double* out) {
    const double sd = std::sqrt(ctx->stat_var);
    stream.fill_normal(out, count);
    for (std::size_t i = 0; i < count; ++i)
      out[i] = ctx->stat_mean + sd * out[i];
  };
  m.proposal_logdensity = [ctx](int, const double* x) {
    return log_normal_pdf(*x, ctx->stat_mean, ctx->stat_var);
  };
  m.aux_logdensity = m.proposal_logdensity;
  m.init_logdensity = [ctx](const double* x) {
    return log_normal_pdf(*x, ctx->stat_mean, ctx->stat_var);
  };
  m.log_potential = [ctx](int t, const double* x) {
    return ctx->log_poisson(t, *x);
  };
  m.transition_logdensity = [ctx](int, const double* xp, const double* xc) {
    return log_normal_pdf(*xc, ctx->icept + ctx->slope * *xp, ctx->p.sigma2);
  };
  m.transition_sampler = [ctx](int, const double* xp, RngStream& stream,
                               double* out) {
    *out = ctx->icept + ctx->slope * *xp +
           std::sqrt(ctx->p.sigma2) * stream.normal();
  };

  // Leaf weights: the init law equals the proposal, so t = 0 reduces to the
  // Poisson potential and t >= 1 is uniform (nu = q).
  m.init_weight_batch = [ctx](int t, const double* xs, std::size_t n,
                              double* out) {
    if (t == 0) {
      for (std::size_t j = 0; j < n; ++j) out[j] = ctx->log_poisson(0, xs[j]);
    } else {
      std::fill(out, out + n, 0.0);
    }
  };

  // Dense stitch row at cut c: the right-particle terms h_c(x_j) - nu_c(x_j)
  // bind once; each row is then one batched Gaussian over the right slab.
  m.stitch_row_factory = [ctx](int c, const double* right, std::size_t n) {
    auto base = std::make_shared<std::vector<double>>(n);
    for (std::size_t j = 0; j < n; ++j)
      (*base)[j] = ctx->log_poisson(c, right[j]) -
                   log_normal_pdf(right[j], ctx->stat_mean, ctx->stat_var) +
                   ctx->trans_norm;
    const double* slab = right;
    return [ctx, base, slab, n](const double* xp, double* out) {
      kernels::gaussian_row(slab, n, ctx->icept + ctx->slope * *xp,
                            -1.0 / (2.0 * ctx->p.sigma2), base->data(), out);
    };
  };

  // Backward rows: log p_t(x_cur | prev_j) is Gaussian in prev_j when the
  // slope is nonzero, constant otherwise.
  m.transition_row_factory = [ctx](int, const double* prev, std::size_t n) {
    const double a = ctx->slope;
    const double* slab = prev;
    if (a == 0.0) {
      return TransitionRowFn([ctx, n](const double* xc, double* out) {
        const double v = log_normal_pdf(*xc, ctx->icept, ctx->p.sigma2);
        std::fill(out, out + n, v);
      });
    }
    const double coef = -a * a / (2.0 * ctx->p.sigma2);
    return TransitionRowFn([ctx, slab, n, a, coef](const double* xc,
                                                   double* out) {
      kernels::gaussian_row(slab, n, (*xc - ctx->icept) / a, coef, nullptr,
                            out);
      kernels::add_vec_scalar(out, n, ctx->trans_norm, nullptr);
    });
  };

  // No log_stitch_bound: sup_x h_c(x) / nu_c(x) is infinite (for y_c = 0 the
  // potential tends to 1 in the left tail while 1 / nu_c explodes).
  return m;
}

double cox_score(const CoxParams& p, const double* path, int horizon) {
  const double s2 = p.sigma2;
  double acc = -(horizon + 1) / (2.0 * s2);
  const double d0 = path[0] - p.mu;
  acc += (1.0 - p.rho * p.rho) / (2.0 * s2 * s2) * d0 * d0;
  for (int s = 1; s <= horizon; ++s) {
    const double r = path[s] - p.mu - p.rho * (path[s - 1] - p.mu);
    acc += r * r / (2.0 * s2 * s2);
  }
  return acc;
}

CoxData simulate_cox(const CoxParams& p, int horizon, std::uint64_t seed) {
  if (horizon < 0)
    throw std::invalid_argument("simulate_cox: horizon must be >= 0");
  const double slope = p.rho * p.lambda;
  if (!(p.sigma2 > 0.0) || !(std::abs(slope) < 1.0))
    throw std::invalid_argument("simulate_cox: invalid parameters");
  const double icept = p.mu * (1.0 - p.rho);
  const double stat_mean = icept / (1.0 - slope);
  const double stat_var = p.sigma2 / (1.0 - slope * slope);

  RngStream stream({seed, 0, 0, StreamRole::data_sim});
  CoxData d;
  d.xs.resize(static_cast<std::size_t>(horizon) + 1);
  d.ys.resize(d.xs.size());
  d.xs[0] = stat_mean + std::sqrt(stat_var) * stream.normal();
  for (int t = 1; t <= horizon; ++t)
    d.xs[static_cast<std::size_t>(t)] =
        icept + slope * d.xs[static_cast<std::size_t>(t) - 1] +
        std::sqrt(p.sigma2) * stream.normal();
  for (std::size_t t = 0; t < d.xs.size(); ++t)
    d.ys[t] = static_cast<double>(poisson_draw(std::exp(d.xs[t]), stream));
  return d;
}

// ---------------------------------------------------------------------------
// Random walk conditioned to stay inside [-1, 1].

namespace {

bool in_box(double x) { return x >= -1.0 && x <= 1.0; }

}  // namespace

FeynmanKacModel make_constrained_rw(double sigma, int horizon) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("make_constrained_rw: sigma must be > 0");
  if (horizon < 0)
    throw std::invalid_argument("make_constrained_rw: horizon must be >= 0");
  const double var = sigma * sigma;
  const double trans_norm = -0.5 * (kLog2Pi + std::log(var));
  constexpr double kLogHalf = -0.6931471805599453;

  FeynmanKacModel m;
  m.state_dim = 1;
  m.horizon = horizon;

  m.proposal_sampler = [](int, std::size_t count, RngStream& stream,
                          double* out) {
    stream.fill_uniform(out, count);
    for (std::size_t i = 0; i < count; ++i) out[i] = 2.0 * out[i] - 1.0;
  };
  m.proposal_logdensity = [](int, const double* x) {
    return in_box(*x) ? kLogHalf : kNegInf;
  };
  m.aux_logdensity = m.proposal_logdensity;
  m.init_logdensity = [](const double* x) {
    return log_normal_pdf(*x, 0.0, 1.0);
  };
  m.log_potential = [](int, const double* x) {
    return in_box(*x) ? 0.0 : kNegInf;
  };
  m.transition_logdensity = [var](int, const double* xp, const double* xc) {
    return log_normal_pdf(*xc, *xp, var);
  };
  m.transition_sampler = [sigma](int, const double* xp, RngStream& stream,
                                 double* out) {
    *out = *xp + sigma * stream.normal();
  };

  // t = 0: N(0,1) init against the U([-1,1]) proposal; t >= 1: uniform while
  // inside the box. Handled as a batch so an out-of-box reference state gets
  // a clean -inf instead of the NaN the generic nu/q ratio would produce.
  m.init_weight_batch = [](int t, const double* xs, std::size_t n,
                           double* out) {
    if (t == 0) {
      constexpr double norm = -0.5 * kLog2Pi - kLogHalf;
      for (std::size_t j = 0; j < n; ++j)
        out[j] = in_box(xs[j]) ? norm - 0.5 * xs[j] * xs[j] : kNegInf;
    } else {
      for (std::size_t j = 0; j < n; ++j) out[j] = in_box(xs[j]) ? 0.0 : kNegInf;
    }
  };

  m.stitch_row_factory = [var, trans_norm](int, const double* right,
                                           std::size_t n) {
    auto base = std::make_shared<std::vector<double>>(n);
    for (std::size_t j = 0; j < n; ++j)
      (*base)[j] = in_box(right[j]) ? trans_norm - kLogHalf : kNegInf;
    const double* slab = right;
    return [base, slab, n, var](const double* xp, double* out) {
      kernels::gaussian_row(slab, n, *xp, -1.0 / (2.0 * var), base->data(),
                            out);
    };
  };

  m.transition_row_factory = [var, trans_norm](int, const double* prev,
                                               std::size_t n) {
    const double* slab = prev;
    return TransitionRowFn([slab, n, var, trans_norm](const double* xc,
                                                      double* out) {
      kernels::gaussian_row(slab, n, *xc, -1.0 / (2.0 * var), nullptr, out);
      kernels::add_vec_scalar(out, n, trans_norm, nullptr);
    });
  };

  // omega_c <= sup p * sup h / inf nu = (2 pi sigma^2)^{-1/2} * 1 * 2.
  m.log_stitch_bound = [trans_norm](int) { return trans_norm - kLogHalf; };
  return m;
}

double rw_score(double sigma, const double* path, int horizon) {
  double acc = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    const double d = path[t] - path[t - 1];
    acc += d * d;
  }
  return std::log(sigma) + acc / (sigma * sigma * sigma);
}

// ---------------------------------------------------------------------------
// Theta-logistic dynamics.

namespace {

struct ThetaCtx {
  ThetaLogisticParams p;
  std::vector<double> ys;
  std::vector<ProposalMarginal> marg;
  double trans_norm = 0.0;  // -0.5 log(2 pi q2)
  double obs_norm = 0.0;    // -0.5 log(2 pi r2)

  double drift(double x) const {
    return x + p.tau0 - p.tau1 * std::exp(p.tau2 * x);
  }
};

}  // namespace

NonlinearGaussianModel theta_logistic_nonlinear(const ThetaLogisticParams& p,
                                                const std::vector<double>& ys) {
  if (!(p.q2 > 0.0) || !(p.r2 > 0.0))
    throw std::invalid_argument(
        "theta_logistic_nonlinear: q2 and r2 must be > 0");
  if (ys.empty())
    throw std::invalid_argument("theta_logistic_nonlinear: no observations");
  check_finite_obs(ys, "theta_logistic_nonlinear");

  const int horizon = static_cast<int>(ys.size()) - 1;
  NonlinearGaussianModel m;
  m.dim_x = 1;
  m.dim_y = 1;
  m.horizon = horizon;
  m.m0 = Eigen::VectorXd::Zero(1);
  m.P0 = Eigen::MatrixXd::Identity(1, 1);
  m.f = [p](int, const Eigen::VectorXd& x) {
    Eigen::VectorXd out(1);
    out(0) = x(0) + p.tau0 - p.tau1 * std::exp(p.tau2 * x(0));
    return out;
  };
  m.f_jac = [p](int, const Eigen::VectorXd& x) {
    Eigen::MatrixXd out(1, 1);
    out(0, 0) = 1.0 - p.tau1 * p.tau2 * std::exp(p.tau2 * x(0));
    return out;
  };
  m.Q.assign(static_cast<std::size_t>(horizon) + 1,
             Eigen::MatrixXd::Constant(1, 1, p.q2));
  m.H.assign(static_cast<std::size_t>(horizon) + 1,
             Eigen::MatrixXd::Identity(1, 1));
  m.R.assign(static_cast<std::size_t>(horizon) + 1,
             Eigen::MatrixXd::Constant(1, 1, p.r2));
  m.y.resize(ys.size());
  for (std::size_t t = 0; t < ys.size(); ++t)
    m.y[t] = Eigen::VectorXd::Constant(1, ys[t]);
  m.has_obs.assign(ys.size(), 1);
  return m;
}

FeynmanKacModel make_theta_logistic(
    const ThetaLogisticParams& p, const std::vector<double>& ys,
    const std::vector<ProposalMarginal>& marginals) {
  if (!(p.q2 > 0.0) || !(p.r2 > 0.0))
    throw std::invalid_argument("make_theta_logistic: q2 and r2 must be > 0");
  if (ys.empty() || marginals.size() != ys.size())
    throw std::invalid_argument(
        "make_theta_logistic: need one proposal marginal per observation");
  check_finite_obs(ys, "make_theta_logistic");
  for (const auto& g : marginals)
    if (!(g.var > 0.0) || !std::isfinite(g.mean))
      throw std::invalid_argument(
          "make_theta_logistic: proposal marginals must have positive "
          "variance");

  auto ctx = std::make_shared<ThetaCtx>();
  ctx->p = p;
  ctx->ys = ys;
  ctx->marg = marginals;
  ctx->trans_norm = -0.5 * (kLog2Pi + std::log(p.q2));
  ctx->obs_norm = -0.5 * (kLog2Pi + std::log(p.r2));

  FeynmanKacModel m;
  m.state_dim = 1;
  m.horizon = static_cast<int>(ys.size()) - 1;

  m.proposal_sampler = [ctx](int t, std::size_t count, RngStream& stream,
                             double* out) {
    const auto& g = ctx->marg[static_cast<std::size_t>(t)];
    const double sd = std::sqrt(g.var);
    stream.fill_normal(out, count);
    for (std::size_t i = 0; i < count; ++i) out[i] = g.mean + sd * out[i];
  };
  m.proposal_logdensity = [ctx](int t, const double* x) {
    const auto& g = ctx->marg[static_cast<std::size_t>(t)];
    return log_normal_pdf(*x, g.mean, g.var);
  };
  m.aux_logdensity = m.proposal_logdensity;
  m.init_logdensity = [](const double* x) {
    return log_normal_pdf(*x, 0.0, 1.0);
  };
  m.log_potential = [ctx](int t, const double* x) {
    return log_normal_pdf(ctx->ys[static_cast<std::size_t>(t)], *x, ctx->p.r2);
  };
  m.transition_logdensity = [ctx](int, const double* xp, const double* xc) {
    return log_normal_pdf(*xc, ctx->drift(*xp), ctx->p.q2);
  };
  m.transition_sampler = [ctx](int, const double* xp, RngStream& stream,
                               double* out) {
    *out = ctx->drift(*xp) + std::sqrt(ctx->p.q2) * stream.normal();
  };

  // Right-particle terms h_c - nu_c bind once per combine as two batched
  // Gaussian passes (the nu part enters with a positive curvature, i.e.
  // subtracted); rows are then Gaussians around the drifted left endpoint.
  m.stitch_row_factory = [ctx](int c, const double* right, std::size_t n) {
    const auto& g = ctx->marg[static_cast<std::size_t>(c)];
    const double y = ctx->ys[static_cast<std::size_t>(c)];
    auto base = std::make_shared<std::vector<double>>(n);
    kernels::gaussian_row(right, n, y, -1.0 / (2.0 * ctx->p.r2), nullptr,
                          base->data());
    kernels::gaussian_row(right, n, g.mean, 1.0 / (2.0 * g.var), base->data(),
                          base->data());
    kernels::add_vec_scalar(
        base->data(), n,
        ctx->obs_norm + 0.5 * (kLog2Pi + std::log(g.var)) + ctx->trans_norm,
        nullptr);
    const double* slab = right;
    return [ctx, base, slab, n](const double* xp, double* out) {
      kernels::gaussian_row(slab, n, ctx->drift(*xp),
                            -1.0 / (2.0 * ctx->p.q2), base->data(), out);
    };
  };

  // Backward rows over a previous-time slab: precompute the drifted slab, then
  // each row is a Gaussian of x_cur around it.
  m.transition_row_factory = [ctx](int, const double* prev, std::size_t n) {
    auto drifted = std::make_shared<std::vector<double>>(n);
    for (std::size_t j = 0; j < n; ++j) (*drifted)[j] = ctx->drift(prev[j]);
    return TransitionRowFn([ctx, drifted, n](const double* xc, double* out) {
      kernels::gaussian_row(drifted->data(), n, *xc,
                            -1.0 / (2.0 * ctx->p.q2), nullptr, out);
      kernels::add_vec_scalar(out, n, ctx->trans_norm, nullptr);
    });
  };

  // The stitch ratio stays bounded iff every stitch-time proposal is at
  // least as wide as the observation noise; expose the bound only then. The
  // transition part is dominated by its Gaussian peak (loose when the drift
  // cannot reach x_cur, but a valid rejection bound).
  bool bounded = true;
  std::vector<double> bounds(ys.size(), 0.0);
  for (int c = 1; c <= m.horizon; ++c) {
    const auto& g = marginals[static_cast<std::size_t>(c)];
    const double s = obs_over_aux_sup(ys[static_cast<std::size_t>(c)], 1.0,
                                      p.r2, g.mean, g.var);
    if (!std::isfinite(s)) {
      bounded = false;
      break;
    }
    bounds[static_cast<std::size_t>(c)] = ctx->trans_norm + s;
  }
  if (bounded && m.horizon >= 1) {
    m.log_stitch_bound = [bounds](int c) {
      return bounds[static_cast<std::size_t>(c)];
    };
  }
  return m;
}

ThetaLogisticData simulate_theta_logistic(const ThetaLogisticParams& p,
                                          int horizon, std::uint64_t seed) {
  if (horizon < 0)
    throw std::invalid_argument(
        "simulate_theta_logistic: horizon must be >= 0");
  if (!(p.q2 > 0.0) || !(p.r2 > 0.0))
    throw std::invalid_argument("simulate_theta_logistic: invalid parameters");

  RngStream stream({seed, 0, 1, StreamRole::data_sim});
  ThetaLogisticData d;
  d.xs.resize(static_cast<std::size_t>(horizon) + 1);
  d.ys.resize(d.xs.size());
  d.xs[0] = stream.normal();
  for (int t = 1; t <= horizon; ++t) {
    const double prev = d.xs[static_cast<std::size_t>(t) - 1];
    d.xs[static_cast<std::size_t>(t)] = prev + p.tau0 -
                                        p.tau1 * std::exp(p.tau2 * prev) +
                                        std::sqrt(p.q2) * stream.normal();
  }
  for (std::size_t t = 0; t < d.xs.size(); ++t)
    d.ys[t] = d.xs[t] + std::sqrt(p.r2) * stream.normal();
  return d;
}

// ---------------------------------------------------------------------------
// One-dimensional linear-Gaussian wrapper.

namespace {

struct LgssmCtx {
  LinearGaussianModel m;
  std::vector<ProposalMarginal> marg;
  double obs(int t) const { return m.y[static_cast<std::size_t>(t)](0); }
  double F(int t) const { return m.F[static_cast<std::size_t>(t)](0, 0); }
  double b(int t) const { return m.b[static_cast<std::size_t>(t)](0); }
  double Q(int t) const { return m.Q[static_cast<std::size_t>(t)](0, 0); }
  double H(int t) const { return m.H[static_cast<std::size_t>(t)](0, 0); }
  double R(int t) const { return m.R[static_cast<std::size_t>(t)](0, 0); }
  bool has_obs(int t) const {
    return m.has_obs[static_cast<std::size_t>(t)] != 0;
  }
};

}  // namespace

FeynmanKacModel make_lgssm_fk(const LinearGaussianModel& lgssm,
                              const std::vector<ProposalMarginal>& marginals) {
  validate_lgssm(lgssm);
  if (lgssm.dim_x != 1 || lgssm.dim_y != 1)
    throw std::invalid_argument("make_lgssm_fk: one-dimensional models only");
  if (marginals.size() != static_cast<std::size_t>(lgssm.horizon) + 1)
    throw std::invalid_argument(
        "make_lgssm_fk: need one proposal marginal per time");
  for (const auto& g : marginals)
    if (!(g.var > 0.0) || !std::isfinite(g.mean))
      throw std::invalid_argument(
          "make_lgssm_fk: proposal marginals must have positive variance");

  auto ctx = std::make_shared<LgssmCtx>();
  ctx->m = lgssm;
  ctx->marg = marginals;

  FeynmanKacModel m;
  m.state_dim = 1;
  m.horizon = lgssm.horizon;

  m.proposal_sampler = [ctx](int t, std::size_t count, RngStream& stream,
                             double* out) {
    const auto& g = ctx->marg[static_cast<std::size_t>(t)];
    const double sd = std::sqrt(g.var);
    stream.fill_normal(out, count);
    for (std::size_t i = 0; i < count; ++i) out[i] = g.mean + sd * out[i];
  };
  m.proposal_logdensity = [ctx](int t, const double* x) {
    const auto& g = ctx->marg[static_cast<std::size_t>(t)];
    return log_normal_pdf(*x, g.mean, g.var);
  };
  m.aux_logdensity = m.proposal_logdensity;
  m.init_logdensity = [ctx](const double* x) {
    return log_normal_pdf(*x, ctx->m.m0(0), ctx->m.P0(0, 0));
  };
  m.log_potential = [ctx](int t, const double* x) {
    if (!ctx->has_obs(t)) return 0.0;
    return log_normal_pdf(ctx->obs(t), ctx->H(t) * *x, ctx->R(t));
  };
  m.transition_logdensity = [ctx](int t, const double* xp, const double* xc) {
    return log_normal_pdf(*xc, ctx->F(t) * *xp + ctx->b(t), ctx->Q(t));
  };
  m.transition_sampler = [ctx](int t, const double* xp, RngStream& stream,
                               double* out) {
    *out = ctx->F(t) * *xp + ctx->b(t) +
           std::sqrt(ctx->Q(t)) * stream.normal();
  };

  m.stitch_row_factory = [ctx](int c, const double* right, std::size_t n) {
    const auto& g = ctx->marg[static_cast<std::size_t>(c)];
    const double qvar = ctx->Q(c);
    const double trans_norm = -0.5 * (kLog2Pi + std::log(qvar));
    auto base = std::make_shared<std::vector<double>>(n);
    double shift = trans_norm + 0.5 * (kLog2Pi + std::log(g.var));
    if (ctx->has_obs(c)) {
      const double h = ctx->H(c);
      const double r = ctx->R(c);
      kernels::gaussian_row(right, n, ctx->obs(c) / h,
                            -h * h / (2.0 * r), nullptr, base->data());
      shift += -0.5 * (kLog2Pi + std::log(r));
    } else {
      std::fill(base->begin(), base->end(), 0.0);
    }
    kernels::gaussian_row(right, n, g.mean, 1.0 / (2.0 * g.var), base->data(),
                          base->data());
    kernels::add_vec_scalar(base->data(), n, shift, nullptr);
    const double* slab = right;
    const double F = ctx->F(c);
    const double b = ctx->b(c);
    return [base, slab, n, F, b, qvar](const double* xp, double* out) {
      kernels::gaussian_row(slab, n, F * *xp + b, -1.0 / (2.0 * qvar),
                            base->data(), out);
    };
  };

  m.transition_row_factory = [ctx](int t, const double* prev, std::size_t n) {
    const double F = ctx->F(t);
    const double b = ctx->b(t);
    const double qvar = ctx->Q(t);
    const double trans_norm = -0.5 * (kLog2Pi + std::log(qvar));
    if (F == 0.0) {
      return TransitionRowFn([b, qvar, n](const double* xc, double* out) {
        const double v = log_normal_pdf(*xc, b, qvar);
        std::fill(out, out + n, v);
      });
    }
    const double coef = -F * F / (2.0 * qvar);
    const double* slab = prev;
    return TransitionRowFn(
        [slab, n, F, b, coef, trans_norm](const double* xc, double* out) {
          kernels::gaussian_row(slab, n, (*xc - b) / F, coef, nullptr, out);
          kernels::add_vec_scalar(out, n, trans_norm, nullptr);
        });
  };

  // Bound: sup_xp p(xc | xp) = (2 pi Q)^{-1/2} needs a nonzero slope to slide
  // the mean anywhere; the xc part needs an observation at the cut and a
  // proposal wider than the likelihood curvature there. Expose the bound only
  // when both hold at every stitch time.
  bool bounded = lgssm.horizon >= 1;
  std::vector<double> bounds(static_cast<std::size_t>(lgssm.horizon) + 1, 0.0);
  for (int c = 1; c <= lgssm.horizon && bounded; ++c) {
    if (!ctx->has_obs(c) || ctx->F(c) == 0.0) {
      bounded = false;
      break;
    }
    const auto& g = marginals[static_cast<std::size_t>(c)];
    const double s = obs_over_aux_sup(ctx->obs(c), ctx->H(c), ctx->R(c),
                                      g.mean, g.var);
    if (!std::isfinite(s)) {
      bounded = false;
      break;
    }
    bounds[static_cast<std::size_t>(c)] =
        -0.5 * (kLog2Pi + std::log(ctx->Q(c))) + s;
  }
  if (bounded) {
    m.log_stitch_bound = [bounds](int c) {
      return bounds[static_cast<std::size_t>(c)];
    };
  }
  return m;
}

}  // namespace dsmc
