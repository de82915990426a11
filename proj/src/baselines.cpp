#include "dsmc/baselines.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

#include "dsmc/kernels.hpp"

namespace dsmc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Stream layout inside one filter run: level 0 = proposal draws at time t,
// level 1 = the resampling step entering time t.
RngStream proposal_stream(std::uint64_t seed, int t) {
  return RngStream(
      {seed, 0, static_cast<std::uint64_t>(t), StreamRole::filter_step});
}

StreamKey resample_key(std::uint64_t seed, int t) {
  return {seed, 1, static_cast<std::uint64_t>(t), StreamRole::filter_step};
}

void check_finite_weights(const double* w, std::size_t n, int t) {
  for (std::size_t i = 0; i < n; ++i)
    if (std::isnan(w[i]))
      throw std::invalid_argument("particle filter: NaN weight at time " +
                                  std::to_string(t));
}

}  // namespace

FilterOutput run_particle_filter(const FeynmanKacModel& model, std::size_t n,
                                 Resampler resampler, std::uint64_t seed) {
  validate_model(model);
  if (n < 1) throw std::invalid_argument("particle filter: need n >= 1");
  if (resampler != Resampler::multinomial &&
      resampler != Resampler::systematic)
    throw std::invalid_argument(
        "particle filter: dense resampling only (multinomial or systematic)");

  const int T = model.horizon;
  const auto dim = static_cast<std::size_t>(model.state_dim);

  FilterOutput out;
  out.horizon = T;
  out.n = n;
  out.dim = model.state_dim;
  out.particles.resize(static_cast<std::size_t>(T + 1) * n * dim);
  out.log_w.resize(static_cast<std::size_t>(T + 1) * n);
  out.ancestors.resize(static_cast<std::size_t>(T) * n);

  {
    auto stream = proposal_stream(seed, 0);
    double* x0 = out.particles.data();
    model.proposal_sampler(0, n, stream, x0);
    double* w0 = out.log_w.data();
    leaf_weights(model, 0, x0, n, w0);
    const double lse = kernels::log_sum_exp(w0, n);
    if (lse == kNegInf)
      throw std::runtime_error(
          "particle filter: every weight is zero at time 0");
    out.log_likelihood = lse - std::log(static_cast<double>(n));
    kernels::add_vec_scalar(w0, n, -lse, nullptr);
  }

  for (int t = 1; t <= T; ++t) {
    const double* w_prev = out.weights_at(t - 1);
    auto anc = resample_indices(resampler, w_prev, n, n, resample_key(seed, t));
    std::memcpy(out.ancestors.data() + static_cast<std::size_t>(t - 1) * n,
                anc.idx.data(), sizeof(std::uint32_t) * n);

    auto stream = proposal_stream(seed, t);
    double* xt = out.particles.data() + static_cast<std::size_t>(t) * n * dim;
    model.proposal_sampler(t, n, stream, xt);

    const double* xp = out.time_slab(t - 1);
    double* wt = out.log_w.data() + static_cast<std::size_t>(t) * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = xt + i * dim;
      const double* ai = xp + anc.idx[i] * dim;
      wt[i] = model.log_potential(t, xi) +
              model.transition_logdensity(t, ai, xi) -
              model.proposal_logdensity(t, xi);
    }
    check_finite_weights(wt, n, t);
    const double lse = kernels::log_sum_exp(wt, n);
    if (lse == kNegInf)
      throw std::runtime_error("particle filter: every weight is zero at time " +
                               std::to_string(t));
    out.log_likelihood += lse - std::log(static_cast<double>(n));
    kernels::add_vec_scalar(wt, n, -lse, nullptr);
  }
  return out;
}

FfbsResult ffbs_sample(const FeynmanKacModel& model, const FilterOutput& filter,
                       std::size_t n_draws, std::uint64_t seed) {
  const int T = filter.horizon;
  const std::size_t n = filter.n;
  const auto dim = static_cast<std::size_t>(filter.dim);
  if (n == 0 || filter.particles.empty())
    throw std::invalid_argument("ffbs: filter output is empty");

  FfbsResult out;
  out.n_draws = n_draws;
  out.horizon = T;
  out.dim = filter.dim;
  out.paths.resize(n_draws * static_cast<std::size_t>(T + 1) * dim);
  if (n_draws == 0) return out;

  const std::size_t stride = static_cast<std::size_t>(T + 1) * dim;
  {
    const StreamKey key{seed, 0, static_cast<std::uint64_t>(T),
                        StreamRole::backward_sample};
    auto ends = multinomial_indices(filter.weights_at(T), n, n_draws, key);
    const double* xT = filter.time_slab(T);
    for (std::size_t m = 0; m < n_draws; ++m)
      std::memcpy(out.paths.data() + m * stride +
                      static_cast<std::size_t>(T) * dim,
                  xT + ends.idx[m] * dim, sizeof(double) * dim);
  }

  std::vector<double> row(n);
  std::vector<double> w(n);
  std::vector<double> sub((n + kernels::kSubBlock - 1) / kernels::kSubBlock);
  for (int t = T - 1; t >= 0; --t) {
    auto fill = make_transition_row(model, t + 1, filter.time_slab(t), n);
    const double* wt = filter.weights_at(t);
    const double* xt = filter.time_slab(t);
    const StreamKey key{seed, 1, static_cast<std::uint64_t>(t),
                        StreamRole::backward_sample};
    for (std::size_t m = 0; m < n_draws; ++m) {
      double* path = out.paths.data() + m * stride;
      fill(path + static_cast<std::size_t>(t + 1) * dim, row.data());
      out.density_evals += n;
      kernels::add_vec_scalar(row.data(), n, 0.0, wt);
      const double shift = kernels::reduce_max(row.data(), n);
      if (shift == kNegInf)
        throw std::runtime_error(
            "ffbs: every backward weight is zero at time " +
            std::to_string(t));
      const double total =
          kernels::exp_row_store(row.data(), n, shift, w.data(), sub.data());

      RngStream stream(key, m + 1);
      const double pt = stream.uniform() * total;
      std::size_t i = 0;
      double cum = w[0];
      while (pt >= cum && i + 1 < n) cum += w[++i];
      while (i > 0 && !(w[i] > 0.0)) --i;  // FP spill: last live entry
      std::memcpy(path + static_cast<std::size_t>(t) * dim, xt + i * dim,
                  sizeof(double) * dim);
    }
  }
  return out;
}

}  // namespace dsmc
