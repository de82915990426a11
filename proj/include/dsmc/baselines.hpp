#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dsmc/fk_model.hpp"
#include "dsmc/resampling.hpp"

// Sequential comparators: a guided particle filter (independent per-time
// proposals q_t, resampling every step) and forward-filtering backward-sampling
// built on its stored history. The filter weight at t = 0 is the leaf weight
// h_0 dP_0/dq_0; at t >= 1 it is h_t(x) p_t(x | ancestor) / q_t(x), so the
// accumulated per-step log mean weights estimate the same normalizing constant
// as the tree smoother.

namespace dsmc {

struct FilterOutput {
  int horizon = 0;
  std::size_t n = 0;
  int dim = 1;
  std::vector<double> particles;        // (T+1) time slabs of n * dim states
  std::vector<double> log_w;            // (T+1) x n, normalized per time
  std::vector<std::uint32_t> ancestors; // T x n; ancestor at t lives at t-1
  double log_likelihood = 0.0;

  const double* time_slab(int t) const {
    return particles.data() + static_cast<std::size_t>(t) * n * dim;
  }
  const double* weights_at(int t) const {
    return log_w.data() + static_cast<std::size_t>(t) * n;
  }
  const std::uint32_t* ancestors_at(int t) const {  // t in 1..T
    return ancestors.data() + static_cast<std::size_t>(t - 1) * n;
  }
};

// Dense resamplers only (multinomial or systematic); throws
// std::invalid_argument otherwise, std::runtime_error naming t when every
// weight dies.
FilterOutput run_particle_filter(const FeynmanKacModel& model, std::size_t n,
                                 Resampler resampler, std::uint64_t seed);

struct FfbsResult {
  std::size_t n_draws = 0;
  int horizon = 0;
  int dim = 1;
  std::vector<double> paths;  // draw-major: n_draws blocks of (T+1) * dim
  std::uint64_t density_evals = 0;

  const double* path(std::size_t m) const {
    return paths.data() +
           m * static_cast<std::size_t>(horizon + 1) * static_cast<std::size_t>(dim);
  }
};

// Independent joint-smoothing draws: sample the endpoint from the final filter
// weights, then walk backward reweighting each filter slab by the transition
// density into the state just chosen. Touches exactly n_draws * T * n
// transition densities (counted in density_evals).
FfbsResult ffbs_sample(const FeynmanKacModel& model, const FilterOutput& filter,
                       std::size_t n_draws, std::uint64_t seed);

}  // namespace dsmc
